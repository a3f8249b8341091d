#include "bgnmf/model.hpp"

#include "bgnmf/errors.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace bgnmf {

void Hyperparams::validate() const {
    std::ostringstream os;
    if (!(a > 0.0) || !std::isfinite(a)) os << "a must be positive; ";
    if (!(b > 0.0) || !std::isfinite(b)) os << "b must be positive; ";
    if (K < 1) os << "K must be >= 1; ";
    if (J < 1) os << "J must be >= 1; ";
    if (static_cast<int>(c.size()) != K) {
        os << "c has " << c.size() << " entries but K = " << K << "; ";
    }
    for (std::size_t k = 0; k < c.size(); ++k) {
        if (!(c[k] > 0.0) || !std::isfinite(c[k])) os << "c[" << k + 1 << "] must be positive; ";
    }
    const std::string msg = os.str();
    if (!msg.empty()) throw ConfigError("invalid hyperparameters: " + msg.substr(0, msg.size() - 2));
}

bool GroupedDataset::labeled() const {
    if (subjects.empty()) return false;
    for (const auto& s : subjects) {
        if (!s.labels) return false;
    }
    return true;
}

std::vector<LabelVector> GroupedDataset::labels() const {
    std::vector<LabelVector> out;
    out.reserve(subjects.size());
    for (const auto& s : subjects) {
        if (!s.labels) throw DataError("subject '" + s.name + "' has no labels");
        out.push_back(*s.labels);
    }
    return out;
}

DatasetSummary GroupedDataset::summary() const {
    DatasetSummary sum;
    sum.subjects = num_subjects();
    sum.features = features();
    for (const auto& s : subjects) {
        sum.frames.push_back(s.frames());
        if (s.labels) {
            for (int y : *s.labels) ++sum.class_histogram[y];
        }
    }
    return sum;
}

void GroupedDataset::validate(int num_classes) const {
    if (subjects.empty()) throw DataError("dataset has no subjects");
    const int m = features();
    for (std::size_t l = 0; l < subjects.size(); ++l) {
        const auto& s = subjects[l];
        const std::string who = "subject " + std::to_string(l + 1) +
                                (s.name.empty() ? "" : " ('" + s.name + "')");
        if (s.features() != m) {
            throw DataError(who + " has " + std::to_string(s.features()) +
                            " features, expected " + std::to_string(m));
        }
        for (Eigen::Index n = 0; n < s.x.cols(); ++n) {
            for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
                const double v = s.x(i, n);
                if (!std::isfinite(v) || v < 0.0) {
                    std::ostringstream os;
                    os << who << ": feature " << i + 1 << " of frame " << n + 1
                       << " is " << v << " (must be finite and >= 0)";
                    throw DataError(os.str());
                }
            }
        }
        if (s.labels) {
            if (static_cast<int>(s.labels->size()) != s.frames()) {
                throw DataError(who + " has " + std::to_string(s.labels->size()) +
                                " labels for " + std::to_string(s.frames()) + " frames");
            }
            if (num_classes > 0) {
                for (std::size_t n = 0; n < s.labels->size(); ++n) {
                    const int y = (*s.labels)[n];
                    if (y < 1 || y > num_classes) {
                        throw DataError(who + ": label " + std::to_string(y) + " of frame " +
                                        std::to_string(n + 1) + " outside 1.." +
                                        std::to_string(num_classes));
                    }
                }
            }
        }
    }
}

RateField reconstruct(const LatentState& latent, const std::vector<LabelVector>& labels) {
    const auto num_subjects = latent.individual.size();
    if (latent.activations.size() != num_subjects || labels.size() != num_subjects) {
        throw DataError("reconstruct: subject count mismatch between latent blocks and labels");
    }
    const Eigen::Index m = latent.common.rows();
    const Eigen::Index k_max = latent.common.cols();
    RateField rates;
    rates.reserve(num_subjects);
    for (std::size_t l = 0; l < num_subjects; ++l) {
        const Matrix& ai = latent.individual[l];
        const Matrix& si = latent.activations[l];
        const LabelVector& y = labels[l];
        if (ai.rows() != m || ai.cols() != si.rows() ||
            si.cols() != static_cast<Eigen::Index>(y.size())) {
            throw DataError("reconstruct: dimension mismatch for subject " + std::to_string(l + 1));
        }
        Matrix rate = ai * si;
        for (Eigen::Index n = 0; n < rate.cols(); ++n) {
            const int k = y[static_cast<std::size_t>(n)];
            if (k < 1 || k > k_max) {
                throw DataError("reconstruct: label " + std::to_string(k) + " outside 1.." +
                                std::to_string(k_max));
            }
            rate.col(n) += latent.common.col(k - 1);
        }
        rates.push_back(std::move(rate));
    }
    return rates;
}

namespace {

// Gamma(shape, rate) draw conditioned on a positive finite value.
double positive_gamma(std::mt19937_64& rng, double shape, double rate) {
    std::gamma_distribution<double> dist(shape, 1.0 / rate);
    for (;;) {
        const double v = dist(rng);
        if (v > 0.0 && std::isfinite(v)) return v;
    }
}

double positive_exponential(std::mt19937_64& rng, double mean) {
    std::exponential_distribution<double> dist(1.0 / mean);
    for (;;) {
        const double v = dist(rng);
        if (v > 0.0 && std::isfinite(v)) return v;
    }
}

void check_labels(const std::vector<LabelVector>& labels, const Dims& dims, int num_classes) {
    if (dims.subjects < 1 || dims.features < 1) {
        throw DataError("sample_dataset: need at least one subject and one feature");
    }
    if (static_cast<int>(dims.frames.size()) != dims.subjects ||
        static_cast<int>(labels.size()) != dims.subjects) {
        throw DataError("sample_dataset: frames and labels need one entry per subject");
    }
    for (int l = 0; l < dims.subjects; ++l) {
        const auto& y = labels[static_cast<std::size_t>(l)];
        if (dims.frames[static_cast<std::size_t>(l)] < 0 ||
            static_cast<int>(y.size()) != dims.frames[static_cast<std::size_t>(l)]) {
            throw DataError("sample_dataset: subject " + std::to_string(l + 1) +
                            " has a label count different from its frame count");
        }
        for (int k : y) {
            if (k < 1 || k > num_classes) {
                throw DataError("sample_dataset: label " + std::to_string(k) + " outside 1.." +
                                std::to_string(num_classes));
            }
        }
    }
}

GroupedDataset draw_observations(std::mt19937_64& rng, const RateField& rates,
                                 const std::vector<LabelVector>& labels) {
    GroupedDataset data;
    data.subjects.reserve(rates.size());
    for (std::size_t l = 0; l < rates.size(); ++l) {
        Subject s;
        s.name = "subject" + std::to_string(l + 1);
        s.x.resize(rates[l].rows(), rates[l].cols());
        for (Eigen::Index n = 0; n < s.x.cols(); ++n) {
            for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
                s.x(i, n) = positive_exponential(rng, rates[l](i, n));
            }
        }
        s.labels = labels[l];
        data.subjects.push_back(std::move(s));
    }
    return data;
}

} // namespace

SampledData sample_dataset(const Hyperparams& h, const Dims& dims,
                           const std::vector<LabelVector>& labels, std::uint64_t seed) {
    h.validate();
    check_labels(labels, dims, h.K);

    std::mt19937_64 rng(seed);
    SampledData out;
    LatentState& z = out.latent;
    z.common.resize(dims.features, h.K);
    for (Eigen::Index k = 0; k < h.K; ++k) {
        for (Eigen::Index m = 0; m < dims.features; ++m) z.common(m, k) = positive_gamma(rng, h.a, h.a);
    }
    for (int l = 0; l < dims.subjects; ++l) {
        Matrix ai(dims.features, h.J);
        for (Eigen::Index j = 0; j < h.J; ++j) {
            for (Eigen::Index m = 0; m < dims.features; ++m) ai(m, j) = positive_gamma(rng, h.b, h.b);
        }
        const auto& y = labels[static_cast<std::size_t>(l)];
        Matrix si(h.J, static_cast<Eigen::Index>(y.size()));
        for (Eigen::Index n = 0; n < si.cols(); ++n) {
            const double c = h.c_for(y[static_cast<std::size_t>(n)]);
            for (Eigen::Index j = 0; j < h.J; ++j) si(j, n) = positive_gamma(rng, c, c);
        }
        z.individual.push_back(std::move(ai));
        z.activations.push_back(std::move(si));
    }
    out.data = draw_observations(rng, reconstruct(z, labels), labels);
    return out;
}

GroupedDataset sample_observations(const LatentState& latent,
                                   const std::vector<LabelVector>& labels,
                                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return draw_observations(rng, reconstruct(latent, labels), labels);
}

LabelVector cyclic_labels(int frames, int num_classes, int run_length) {
    if (num_classes < 1 || run_length < 1 || frames < 0) {
        throw DataError("cyclic_labels: need num_classes >= 1, run_length >= 1, frames >= 0");
    }
    LabelVector y(static_cast<std::size_t>(frames));
    for (int n = 0; n < frames; ++n) y[static_cast<std::size_t>(n)] = (n / run_length) % num_classes + 1;
    return y;
}

} // namespace bgnmf
