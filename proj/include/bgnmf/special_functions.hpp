#pragma once

namespace bgnmf {

/**
 * Parameters of a Generalized Inverse-Gaussian distribution with unnormalized
 * density x^(gamma - 1) * exp(-rho * x - tau / x) on x > 0.
 *
 * tau == 0 is the Gamma(gamma, rho) case and rho == 0 the inverse-Gamma case.
 * A Bessel argument 2 sqrt(rho tau) that underflows to zero is treated the
 * same way.
 */
struct GigParams {
    double gamma = 1.0;
    double rho = 1.0;
    double tau = 0.0;

    bool operator==(const GigParams&) const = default;
};

/// Expectations E[x], E[1/x] and E[log x] under a GIG distribution.
struct GigMoments {
    double e_x = 1.0;
    double e_inv_x = 1.0;
    double e_log_x = 0.0;

    bool operator==(const GigMoments&) const = default;
};

/// What gig_moments does when E[1/x] or E[x] diverges.
enum class DivergentMoment {
    kThrow,    ///< throw MomentUndefined
    kInfinity, ///< store +infinity in the affected field
};

/**
 * Natural log of the modified Bessel function of the second kind K_nu(x).
 *
 * Evaluated entirely in log space, so it neither overflows for tiny x and large
 * order nor underflows for large x. Symmetric in nu. Throws DomainError for
 * x <= 0 or non-finite arguments.
 */
double log_bessel_k(double nu, double x);

/// d/dnu log K_nu(x) by central difference in log space.
double log_bessel_k_order_derivative(double nu, double x);

/// Throws DomainError unless p describes a normalizable GIG.
void validate(const GigParams& p);

/// log of the integral of x^(gamma - 1) exp(-rho x - tau / x) over (0, inf).
double gig_log_normalizer(const GigParams& p);

GigMoments gig_moments(const GigParams& p,
                       DivergentMoment policy = DivergentMoment::kThrow);

/// Differential entropy -E_q[log q(x)] of q = GIG(p), given its moments.
double gig_entropy(const GigParams& p, const GigMoments& m);

/// E_q[log Gamma(x; shape, rate)] with the expectation taken under moments m.
double gamma_cross_entropy(double shape, double rate, const GigMoments& m);

double digamma(double x);

} // namespace bgnmf
