#pragma once

#include <stdexcept>
#include <string>

namespace bgnmf {

// Invalid argument to a math routine (bad GIG parameters, x <= 0, ...).
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

// E[1/x] (or E[x]) does not exist for the requested distribution.
class MomentUndefined : public DomainError {
  public:
    using DomainError::DomainError;
};

// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or option values.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Non-finite values produced during inference.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace bgnmf
