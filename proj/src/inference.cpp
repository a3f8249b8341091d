#include "bgnmf/inference.hpp"

#include "bgnmf/errors.hpp"
#include "parallel.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace bgnmf {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// weight^2 * inv_moment, with a zero weight silencing a divergent moment.
inline double weighted_inverse(double weight, double inv_moment) {
    return weight == 0.0 ? 0.0 : weight * weight * inv_moment;
}

struct Shares {
    double common;
    double individual;
};

// Optimal split between the common and individual parts given their Jensen
// costs. Each share is formed directly so a tiny one keeps full precision.
inline Shares optimal_shares(double common_cost, double individual_cost) {
    const bool c_inf = std::isinf(common_cost);
    const bool d_inf = std::isinf(individual_cost);
    if (c_inf && d_inf) return {0.5, 0.5};
    if (d_inf) return {1.0, 0.0};
    if (c_inf) return {0.0, 1.0};
    const double total = common_cost + individual_cost;
    return {individual_cost / total, common_cost / total};
}

const LabelVector& labels_of(const Subject& s) {
    if (!s.labels) throw DataError("subject '" + s.name + "' has no labels; inference needs labeled data");
    return *s.labels;
}

void check_shapes(const Posterior& post, const GroupedDataset& data) {
    if (static_cast<int>(post.individual.size()) != data.num_subjects() ||
        static_cast<int>(post.activations.size()) != data.num_subjects()) {
        throw DataError("posterior and dataset disagree on the number of subjects");
    }
    for (std::size_t l = 0; l < data.subjects.size(); ++l) {
        const auto& s = data.subjects[l];
        if (post.individual[l].rows() != s.x.rows() || post.common.rows() != s.x.rows() ||
            post.activations[l].cols() != s.x.cols()) {
            throw DataError("posterior shape does not match subject " + std::to_string(l + 1));
        }
    }
}

[[noreturn]] void non_finite(const std::string& what, std::size_t l, Eigen::Index m,
                             Eigen::Index n, double value) {
    std::ostringstream os;
    os << "non-finite " << what << " (" << value << ") at subject " << l + 1 << ", feature "
       << m + 1 << ", frame " << n + 1;
    throw NumericalError(os.str());
}

GigParamMatrix prior_shaped(Eigen::Index rows, Eigen::Index cols, double shape) {
    return {Matrix::Constant(rows, cols, shape), Matrix::Constant(rows, cols, kInitConcentration),
            Matrix::Constant(rows, cols, kInitConcentration)};
}

} // namespace

void GigMatrix::assign(GigParamMatrix params) {
    params_ = std::move(params);
    const Eigen::Index r = params_.rows();
    const Eigen::Index c = params_.cols();
    mean_.resize(r, c);
    inv_mean_.resize(r, c);
    log_mean_.resize(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
        for (Eigen::Index i = 0; i < r; ++i) {
            const GigMoments m = gig_moments(at(i, j), DivergentMoment::kInfinity);
            mean_(i, j) = m.e_x;
            inv_mean_(i, j) = m.e_inv_x;
            log_mean_(i, j) = m.e_log_x;
        }
    }
}

void FitOptions::validate() const {
    std::ostringstream os;
    if (min_iters < 1) os << "min_iters must be >= 1; ";
    if (max_iters < min_iters) os << "max_iters must be >= min_iters; ";
    if (!(rel_tol > 0.0)) os << "rel_tol must be positive; ";
    if (track_elbo_every < 1) os << "track_elbo_every must be >= 1; ";
    if (threads < 1) os << "threads must be >= 1; ";
    const std::string msg = os.str();
    if (!msg.empty()) throw ConfigError("invalid fit options: " + msg.substr(0, msg.size() - 2));
}

Posterior init_posterior(const Hyperparams& h, const GroupedDataset& data, std::uint64_t seed,
                         bool jitter) {
    h.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(0.9, 1.1);
    auto jittered = [&](GigParamMatrix p) {
        if (jitter) p.rho = p.rho.unaryExpr([&](double v) { return v * noise(rng); });
        return p;
    };

    const int m = data.features();
    Posterior post;
    post.common.assign(jittered(prior_shaped(m, h.K, h.a)));
    for (const auto& s : data.subjects) {
        const LabelVector& y = labels_of(s);
        post.individual.emplace_back(jittered(prior_shaped(m, h.J, h.b)));
        GigParamMatrix act = prior_shaped(h.J, s.frames(), 1.0);
        for (Eigen::Index n = 0; n < act.cols(); ++n) {
            act.gamma.col(n).setConstant(h.c_for(y[static_cast<std::size_t>(n)]));
        }
        post.activations.emplace_back(jittered(std::move(act)));
    }
    return post;
}

void update_aux(const Posterior& post, const GroupedDataset& data, AuxState& aux, int threads) {
    check_shapes(post, data);
    const auto num_subjects = data.subjects.size();
    const Eigen::Index num_bases = post.individual_bases();
    aux.pi1.resize(num_subjects);
    aux.pi2.resize(num_subjects);
    aux.psi.resize(num_subjects);
    const Matrix& common_inv = post.common.inv_mean();

    detail::parallel_for(num_subjects, threads, [&](std::size_t l) {
        const Subject& s = data.subjects[l];
        const LabelVector& y = labels_of(s);
        const Matrix& ind_inv = post.individual[l].inv_mean();
        const Matrix& act_inv = post.activations[l].inv_mean();
        const Eigen::Index rows = s.x.rows();
        const Eigen::Index cols = s.x.cols();
        Matrix& pi1 = aux.pi1[l];
        Matrix& pi2 = aux.pi2[l];
        pi1.resize(rows, cols);
        pi2.resize(rows, cols);
        auto& psi = aux.psi[l];
        psi.assign(static_cast<std::size_t>(num_bases), Matrix(rows, cols));

        std::vector<double> cost(static_cast<std::size_t>(num_bases));
        for (Eigen::Index n = 0; n < cols; ++n) {
            const Eigen::Index k = y[static_cast<std::size_t>(n)] - 1;
            for (Eigen::Index m = 0; m < rows; ++m) {
                // psi_j proportional to 1 / E[1/(A_I S_I)]_j.
                double precision = 0.0;
                for (Eigen::Index j = 0; j < num_bases; ++j) {
                    const double e = ind_inv(m, j) * act_inv(j, n);
                    if (!(e > 0.0) || std::isnan(e)) non_finite("E[1/(A_I S_I)]", l, m, n, e);
                    cost[static_cast<std::size_t>(j)] = e;
                    precision += 1.0 / e;
                }
                double individual_cost = kInf;
                if (precision > 0.0) {
                    individual_cost = 1.0 / precision;
                    for (Eigen::Index j = 0; j < num_bases; ++j) {
                        psi[static_cast<std::size_t>(j)](m, n) =
                            (1.0 / cost[static_cast<std::size_t>(j)]) / precision;
                    }
                } else {
                    for (Eigen::Index j = 0; j < num_bases; ++j) {
                        psi[static_cast<std::size_t>(j)](m, n) = 1.0 / static_cast<double>(num_bases);
                    }
                }
                const double common_cost = common_inv(m, k);
                if (!(common_cost > 0.0) || std::isnan(common_cost)) {
                    non_finite("E[1/A_C]", l, m, n, common_cost);
                }
                const Shares shares = optimal_shares(common_cost, individual_cost);
                pi1(m, n) = shares.common;
                pi2(m, n) = shares.individual;
            }
        }
    });
}

void update_w(const Posterior& post, const GroupedDataset& data, AuxState& aux, int threads) {
    check_shapes(post, data);
    aux.w.resize(data.subjects.size());
    const Matrix& common_mean = post.common.mean();
    detail::parallel_for(data.subjects.size(), threads, [&](std::size_t l) {
        const LabelVector& y = labels_of(data.subjects[l]);
        Matrix w = post.individual[l].mean() * post.activations[l].mean();
        for (Eigen::Index n = 0; n < w.cols(); ++n) {
            w.col(n) += common_mean.col(y[static_cast<std::size_t>(n)] - 1);
        }
        for (Eigen::Index n = 0; n < w.cols(); ++n) {
            for (Eigen::Index m = 0; m < w.rows(); ++m) {
                if (!(w(m, n) > 0.0) || !std::isfinite(w(m, n))) {
                    non_finite("expansion point w", l, m, n, w(m, n));
                }
            }
        }
        aux.w[l] = std::move(w);
    });
}

GigParamMatrix update_q_common(const AuxState& aux, const GroupedDataset& data,
                               const Hyperparams& h) {
    const Eigen::Index rows = data.features();
    GigParamMatrix out{Matrix::Constant(rows, h.K, h.a), Matrix::Constant(rows, h.K, h.a),
                       Matrix::Zero(rows, h.K)};
    for (std::size_t l = 0; l < data.subjects.size(); ++l) {
        const Subject& s = data.subjects[l];
        const LabelVector& y = labels_of(s);
        const Matrix& w = aux.w[l];
        const Matrix& pi1 = aux.pi1[l];
        for (Eigen::Index n = 0; n < s.x.cols(); ++n) {
            const Eigen::Index k = y[static_cast<std::size_t>(n)] - 1;
            if (k < 0 || k >= h.K) throw DataError("label outside 1..K in update_q_common");
            out.rho.col(k) += w.col(n).cwiseInverse();
            out.tau.col(k) += (pi1.col(n).array().square() * s.x.col(n).array()).matrix();
        }
    }
    return out;
}

std::vector<GigParamMatrix> update_q_individual(const Posterior& post, const AuxState& aux,
                                                const GroupedDataset& data,
                                                const Hyperparams& h, int threads) {
    check_shapes(post, data);
    std::vector<GigParamMatrix> out(data.subjects.size());
    detail::parallel_for(data.subjects.size(), threads, [&](std::size_t l) {
        const Subject& s = data.subjects[l];
        const Matrix& w = aux.w[l];
        const Matrix& pi2 = aux.pi2[l];
        const Matrix& act_mean = post.activations[l].mean();
        const Matrix& act_inv = post.activations[l].inv_mean();
        const Eigen::Index rows = s.x.rows();
        GigParamMatrix p{Matrix::Constant(rows, h.J, h.b), Matrix::Constant(rows, h.J, h.b),
                         Matrix::Zero(rows, h.J)};
        for (Eigen::Index j = 0; j < h.J; ++j) {
            const Matrix& psi = aux.psi[l][static_cast<std::size_t>(j)];
            for (Eigen::Index n = 0; n < s.x.cols(); ++n) {
                for (Eigen::Index m = 0; m < rows; ++m) {
                    p.rho(m, j) += act_mean(j, n) / w(m, n);
                    const double x = s.x(m, n);
                    if (x == 0.0) continue;
                    const double weight = pi2(m, n) * psi(m, n);
                    p.tau(m, j) += x * weighted_inverse(weight, act_inv(j, n));
                }
            }
        }
        out[l] = std::move(p);
    });
    return out;
}

std::vector<GigParamMatrix> update_q_activations(const Posterior& post, const AuxState& aux,
                                                 const GroupedDataset& data,
                                                 const Hyperparams& h, int threads) {
    check_shapes(post, data);
    std::vector<GigParamMatrix> out(data.subjects.size());
    detail::parallel_for(data.subjects.size(), threads, [&](std::size_t l) {
        const Subject& s = data.subjects[l];
        const LabelVector& y = labels_of(s);
        const Matrix& w = aux.w[l];
        const Matrix& pi2 = aux.pi2[l];
        const Matrix& ind_mean = post.individual[l].mean();
        const Matrix& ind_inv = post.individual[l].inv_mean();
        const Eigen::Index cols = s.x.cols();
        GigParamMatrix p{Matrix(h.J, cols), Matrix(h.J, cols), Matrix::Zero(h.J, cols)};
        for (Eigen::Index n = 0; n < cols; ++n) {
            const double c = h.c_for(y[static_cast<std::size_t>(n)]);
            p.gamma.col(n).setConstant(c);
            p.rho.col(n).setConstant(c);
        }
        for (Eigen::Index j = 0; j < h.J; ++j) {
            const Matrix& psi = aux.psi[l][static_cast<std::size_t>(j)];
            for (Eigen::Index n = 0; n < cols; ++n) {
                double rho = 0.0;
                double tau = 0.0;
                for (Eigen::Index m = 0; m < s.x.rows(); ++m) {
                    rho += ind_mean(m, j) / w(m, n);
                    const double x = s.x(m, n);
                    if (x == 0.0) continue;
                    const double weight = pi2(m, n) * psi(m, n);
                    tau += x * weighted_inverse(weight, ind_inv(m, j));
                }
                p.rho(j, n) += rho;
                p.tau(j, n) = tau;
            }
        }
        out[l] = std::move(p);
    });
    return out;
}

std::vector<int> empty_classes(const GroupedDataset& data, int num_classes) {
    std::vector<long> counts(static_cast<std::size_t>(num_classes), 0);
    for (const auto& s : data.subjects) {
        for (int y : labels_of(s)) {
            if (y >= 1 && y <= num_classes) ++counts[static_cast<std::size_t>(y - 1)];
        }
    }
    std::vector<int> out;
    for (int k = 0; k < num_classes; ++k) {
        if (counts[static_cast<std::size_t>(k)] == 0) out.push_back(k + 1);
    }
    return out;
}

namespace {

struct FactorSums {
    double prior = 0.0;
    double entropy = 0.0;
};

// shape_of(i, j) gives the prior shape (= rate) of entry (i, j).
template <typename ShapeFn>
FactorSums factor_sums(const GigMatrix& q, ShapeFn&& shape_of, const std::string& name) {
    FactorSums sums;
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            const GigMoments mo = q.moments_at(i, j);
            const double shape = shape_of(i, j);
            const double prior = gamma_cross_entropy(shape, shape, mo);
            const double entropy = gig_entropy(q.at(i, j), mo);
            if (!std::isfinite(prior) || !std::isfinite(entropy)) {
                std::ostringstream os;
                os << "non-finite bound term for " << name << "(" << i + 1 << ", " << j + 1
                   << "): prior " << prior << ", entropy " << entropy;
                throw NumericalError(os.str());
            }
            sums.prior += prior;
            sums.entropy += entropy;
        }
    }
    return sums;
}

} // namespace

ElboTerms elbo_terms(const Posterior& post, const AuxState& aux, const GroupedDataset& data,
                     const Hyperparams& h, int threads) {
    check_shapes(post, data);
    const auto num_subjects = data.subjects.size();
    if (aux.pi1.size() != num_subjects || aux.pi2.size() != num_subjects || aux.psi.size() != num_subjects ||
        aux.w.size() != num_subjects) {
        throw DataError("auxiliary state does not match the dataset");
    }
    const Matrix& common_mean = post.common.mean();
    const Matrix& common_inv = post.common.inv_mean();
    const Eigen::Index num_bases = post.individual_bases();

    // Per-subject partial sums, combined in subject order.
    std::vector<double> likelihood(num_subjects, 0.0);
    std::vector<FactorSums> individual(num_subjects);
    std::vector<FactorSums> activations(num_subjects);
    detail::parallel_for(num_subjects, threads, [&](std::size_t l) {
        const Subject& s = data.subjects[l];
        const LabelVector& y = labels_of(s);
        const Matrix& ind_mean = post.individual[l].mean();
        const Matrix& ind_inv = post.individual[l].inv_mean();
        const Matrix& act_mean = post.activations[l].mean();
        const Matrix& act_inv = post.activations[l].inv_mean();
        const Matrix& pi1 = aux.pi1[l];
        const Matrix& pi2 = aux.pi2[l];
        const Matrix& w = aux.w[l];
        double total = 0.0;
        for (Eigen::Index n = 0; n < s.x.cols(); ++n) {
            const Eigen::Index k = y[static_cast<std::size_t>(n)] - 1;
            for (Eigen::Index m = 0; m < s.x.rows(); ++m) {
                const double x = s.x(m, n);
                double expected_rate = common_mean(m, k);
                double individual_cost = 0.0;
                for (Eigen::Index j = 0; j < num_bases; ++j) {
                    expected_rate += ind_mean(m, j) * act_mean(j, n);
                    individual_cost += weighted_inverse(
                        aux.psi[l][static_cast<std::size_t>(j)](m, n), ind_inv(m, j) * act_inv(j, n));
                }
                double cell = -std::log(w(m, n)) + 1.0 - expected_rate / w(m, n);
                if (x != 0.0) {
                    cell -= x * (weighted_inverse(pi1(m, n), common_inv(m, k)) +
                                 weighted_inverse(pi2(m, n), individual_cost));
                }
                if (!std::isfinite(cell)) non_finite("likelihood bound", l, m, n, cell);
                total += cell;
            }
        }
        likelihood[l] = total;

        const double b = h.b;
        individual[l] = factor_sums(post.individual[l], [b](Eigen::Index, Eigen::Index) { return b; },
                                    "A_I[subject " + std::to_string(l + 1) + "]");
        activations[l] = factor_sums(
            post.activations[l],
            [&](Eigen::Index, Eigen::Index n) { return h.c_for(y[static_cast<std::size_t>(n)]); },
            "S_I[subject " + std::to_string(l + 1) + "]");
    });

    ElboTerms t;
    const double a = h.a;
    const FactorSums common = factor_sums(post.common, [a](Eigen::Index, Eigen::Index) { return a; }, "A_C");
    t.prior_common = common.prior;
    t.entropy_common = common.entropy;
    for (std::size_t l = 0; l < num_subjects; ++l) {
        t.likelihood += likelihood[l];
        t.prior_individual += individual[l].prior;
        t.entropy_individual += individual[l].entropy;
        t.prior_activations += activations[l].prior;
        t.entropy_activations += activations[l].entropy;
    }
    return t;
}

double elbo(const Posterior& post, const AuxState& aux, const GroupedDataset& data,
            const Hyperparams& h, int threads) {
    return elbo_terms(post, aux, data, h, threads).total();
}

FitResult fit(const GroupedDataset& data, const Hyperparams& h, const FitOptions& opts) {
    h.validate();
    opts.validate();
    if (!data.labeled()) throw DataError("fit needs labels for every subject");
    data.validate(h.K);

    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    };

    FitResult result;
    for (int k : empty_classes(data, h.K)) {
        result.warnings.push_back("class " + std::to_string(k) +
                                  " has no frames; its common basis stays at the prior");
    }

    const int threads = opts.threads;
    Posterior& post = result.posterior;
    AuxState& aux = result.aux;
    post = init_posterior(h, data, opts.seed, opts.init_jitter);
    auto refresh = [&] {
        update_aux(post, data, aux, threads);
        update_w(post, data, aux, threads);
    };
    auto assign_all = [&](std::vector<GigMatrix>& dst, std::vector<GigParamMatrix> src) {
        detail::parallel_for(dst.size(), threads, [&](std::size_t l) { dst[l].assign(std::move(src[l])); });
    };

    refresh();
    double previous = elbo(post, aux, data, h, threads);
    if (!std::isfinite(previous)) throw NumericalError("initial bound is not finite");
    result.trace.push_back({0, previous, elapsed_ms()});

    for (int it = 1; it <= opts.max_iters; ++it) {
        post.common.assign(update_q_common(aux, data, h));
        refresh();
        assign_all(post.individual, update_q_individual(post, aux, data, h, threads));
        refresh();
        assign_all(post.activations, update_q_activations(post, aux, data, h, threads));
        refresh();
        result.iterations = it;

        if (it % opts.track_elbo_every != 0 && it != opts.max_iters) continue;
        const double current = elbo(post, aux, data, h, threads);
        if (!std::isfinite(current)) {
            throw NumericalError("bound became non-finite at iteration " + std::to_string(it));
        }
        result.trace.push_back({it, current, elapsed_ms()});
        const double change = std::abs(current - previous) / std::max(std::abs(previous), 1e-300);
        previous = current;
        if (it >= opts.min_iters && change < opts.rel_tol) {
            result.converged = true;
            break;
        }
    }
    return result;
}

} // namespace bgnmf
