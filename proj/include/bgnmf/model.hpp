#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bgnmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Class ids of the frames of one subject, in 1..K.
using LabelVector = std::vector<int>;

/**
 * Prior hyperparameters of the group model.
 *
 * Common bases ~ Gamma(a, a), individual bases ~ Gamma(b, b), and individual
 * activations of a frame labeled k ~ Gamma(c[k-1], c[k-1]). All Gammas are
 * shape/rate, so every prior has mean one.
 */
struct Hyperparams {
    double a = 0.1;
    double b = 0.1;
    std::vector<double> c{0.1, 0.1, 0.1};
    int K = 3;
    int J = 1;

    /// c value for class id k in 1..K.
    double c_for(int k) const { return c[static_cast<std::size_t>(k - 1)]; }

    /// Throws ConfigError on non-positive values or |c| != K.
    void validate() const;
};

/// Per-subject feature matrix (features x frames) with optional labels.
struct Subject {
    std::string name;
    Matrix x;
    std::optional<LabelVector> labels;

    int features() const { return static_cast<int>(x.rows()); }
    int frames() const { return static_cast<int>(x.cols()); }
};

struct DatasetSummary {
    int subjects = 0;
    int features = 0;
    std::vector<int> frames;
    /// class id -> frame count over all subjects.
    std::map<int, long> class_histogram;
};

struct GroupedDataset {
    std::vector<Subject> subjects;

    int num_subjects() const { return static_cast<int>(subjects.size()); }
    int features() const { return subjects.empty() ? 0 : subjects.front().features(); }
    bool labeled() const;
    std::vector<LabelVector> labels() const;
    DatasetSummary summary() const;

    /**
     * Checks nonnegative finite entries, a common feature count and, when
     * num_classes > 0, that every label lies in 1..num_classes. Throws DataError.
     */
    void validate(int num_classes = 0) const;
};

/// Latent variables of the generative model. The class indicator is implied
/// by the labels and never stored.
struct LatentState {
    Matrix common;                   ///< M x K
    std::vector<Matrix> individual;  ///< per subject, M x J
    std::vector<Matrix> activations; ///< per subject, J x N_l
};

/// Per-subject M x N_l exponential means.
using RateField = std::vector<Matrix>;

/// Lambda_lmn = common(m, y_ln) + sum_j individual_l(m, j) activations_l(j, n).
RateField reconstruct(const LatentState& latent, const std::vector<LabelVector>& labels);

struct Dims {
    int subjects = 1;
    int features = 1;
    std::vector<int> frames; ///< one entry per subject
};

struct SampledData {
    GroupedDataset data;
    LatentState latent;
};

/**
 * Draws latent variables and observations from the generative model.
 *
 * X_lmn ~ Exponential with mean Lambda_lmn. Deterministic given seed; every
 * value is strictly positive and finite.
 */
SampledData sample_dataset(const Hyperparams& h, const Dims& dims,
                           const std::vector<LabelVector>& labels, std::uint64_t seed);

/// Draws observations for fixed latent variables.
GroupedDataset sample_observations(const LatentState& latent,
                                   const std::vector<LabelVector>& labels,
                                   std::uint64_t seed);

/**
 * Balanced labels cycling through classes 1..K in contiguous runs of
 * run_length frames, so every prefix of K * run_length frames holds all
 * classes.
 */
LabelVector cyclic_labels(int frames, int num_classes, int run_length);

} // namespace bgnmf
