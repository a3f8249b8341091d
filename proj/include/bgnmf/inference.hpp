#pragma once

#include "bgnmf/model.hpp"
#include "bgnmf/special_functions.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bgnmf {

/// Element-wise GIG parameters for a matrix of latent variables.
struct GigParamMatrix {
    Matrix gamma;
    Matrix rho;
    Matrix tau;

    Eigen::Index rows() const { return gamma.rows(); }
    Eigen::Index cols() const { return gamma.cols(); }
};

/**
 * GIG factors for a matrix of latent variables together with their cached
 * moments. Moments are recomputed on every assign(), so they can never go
 * stale relative to the parameters.
 */
class GigMatrix {
  public:
    GigMatrix() = default;
    explicit GigMatrix(GigParamMatrix params) { assign(std::move(params)); }

    /// Replaces all parameters and recomputes moments. Divergent E[1/x]
    /// (tau = 0 with gamma <= 1) is stored as +infinity.
    void assign(GigParamMatrix params);

    Eigen::Index rows() const { return params_.rows(); }
    Eigen::Index cols() const { return params_.cols(); }

    const GigParamMatrix& params() const { return params_; }
    GigParams at(Eigen::Index i, Eigen::Index j) const {
        return {params_.gamma(i, j), params_.rho(i, j), params_.tau(i, j)};
    }
    GigMoments moments_at(Eigen::Index i, Eigen::Index j) const {
        return {mean_(i, j), inv_mean_(i, j), log_mean_(i, j)};
    }

    const Matrix& mean() const { return mean_; }         ///< E[x]
    const Matrix& inv_mean() const { return inv_mean_; } ///< E[1/x]
    const Matrix& log_mean() const { return log_mean_; } ///< E[log x]

  private:
    GigParamMatrix params_;
    Matrix mean_;
    Matrix inv_mean_;
    Matrix log_mean_;
};

/// Mean-field variational posterior over all latent factors.
struct Posterior {
    GigMatrix common;                   ///< M x K
    std::vector<GigMatrix> individual;  ///< per subject, M x J
    std::vector<GigMatrix> activations; ///< per subject, J x N_l

    int features() const { return static_cast<int>(common.rows()); }
    int classes() const { return static_cast<int>(common.cols()); }
    int individual_bases() const {
        return individual.empty() ? 0 : static_cast<int>(individual.front().cols());
    }
};

/**
 * Auxiliary parameters that tighten the likelihood bound, one entry per
 * (subject, feature, frame) cell.
 *
 * The class weights phi are one-hot at the frame label in every cell and are
 * carried by the labels themselves. psi[l][j] holds the weight of individual
 * basis j; pi1 the weight of the common part and pi2 = 1 - pi1 that of the
 * individual part (stored separately so a tiny pi2 is not rounded away); w the
 * first-order expansion point of -log Lambda.
 */
struct AuxState {
    std::vector<Matrix> pi1;
    std::vector<Matrix> pi2;
    std::vector<std::vector<Matrix>> psi;
    std::vector<Matrix> w;
};

struct FitOptions {
    int max_iters = 500;
    int min_iters = 10;
    double rel_tol = 1e-6;
    std::uint64_t seed = 0;
    int track_elbo_every = 1;
    int threads = 1;
    /// +-10% multiplicative jitter on the initial rho values.
    bool init_jitter = true;

    void validate() const;
};

struct TracePoint {
    int iter = 0;
    double elbo = 0.0;
    double wall_ms = 0.0;
};

struct FitResult {
    Posterior posterior;
    AuxState aux;
    std::vector<TracePoint> trace;
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

/// Scale of the initial rho and tau; large values give concentrated
/// initial factors with mean close to one.
inline constexpr double kInitConcentration = 100.0;

/**
 * Initial posterior: gamma at the prior shape, rho = tau = kInitConcentration
 * with rho jittered by iid factors in [0.9, 1.1] when jitter is on.
 */
Posterior init_posterior(const Hyperparams& h, const GroupedDataset& data, std::uint64_t seed,
                         bool jitter = true);

/// Closed-form optimum of psi and pi1 for the current posterior.
void update_aux(const Posterior& post, const GroupedDataset& data, AuxState& aux,
                int threads = 1);

/// Expansion points w = E[Lambda] under the current posterior.
void update_w(const Posterior& post, const GroupedDataset& data, AuxState& aux,
              int threads = 1);

GigParamMatrix update_q_common(const AuxState& aux, const GroupedDataset& data,
                               const Hyperparams& h);
std::vector<GigParamMatrix> update_q_individual(const Posterior& post, const AuxState& aux,
                                                const GroupedDataset& data,
                                                const Hyperparams& h, int threads = 1);
std::vector<GigParamMatrix> update_q_activations(const Posterior& post, const AuxState& aux,
                                                 const GroupedDataset& data,
                                                 const Hyperparams& h, int threads = 1);

/// Class ids in 1..K that no frame carries.
std::vector<int> empty_classes(const GroupedDataset& data, int num_classes);

/// The evidence lower bound split into its parts.
struct ElboTerms {
    double likelihood = 0.0;
    double prior_common = 0.0;
    double prior_individual = 0.0;
    double prior_activations = 0.0;
    double entropy_common = 0.0;
    double entropy_individual = 0.0;
    double entropy_activations = 0.0;

    double total() const {
        return likelihood + prior_common + prior_individual + prior_activations +
               entropy_common + entropy_individual + entropy_activations;
    }
};

/// Throws NumericalError naming the offending cell or factor on any
/// non-finite contribution.
ElboTerms elbo_terms(const Posterior& post, const AuxState& aux, const GroupedDataset& data,
                     const Hyperparams& h, int threads = 1);

double elbo(const Posterior& post, const AuxState& aux, const GroupedDataset& data,
            const Hyperparams& h, int threads = 1);

/**
 * Coordinate ascent on the lower bound. Each sweep updates the common bases,
 * the individual bases and the activations in turn, refreshing the auxiliary
 * parameters before every factor update. trace[0] is the initial bound.
 */
FitResult fit(const GroupedDataset& data, const Hyperparams& h, const FitOptions& opts);

} // namespace bgnmf
