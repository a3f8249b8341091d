#pragma once

#include "bgnmf/inference.hpp"
#include "bgnmf/model.hpp"

#include <string>
#include <vector>

namespace bgnmf {

enum class DecisionRule {
    kNearestBasis,       ///< argmin_k ||x - a_k||^2
    kScaledNearestBasis, ///< argmin_k ||x - alpha a_k||^2, alpha >= 0 least squares
    kFarthestBasis,      ///< argmax_k ||x - a_k||^2, the rule as literally printed
};

/// "argmin", "scaled" or "argmax".
DecisionRule parse_rule(const std::string& name);
std::string rule_name(DecisionRule rule);

struct Prediction {
    std::vector<LabelVector> labels; ///< per subject, class ids in 1..K
    std::vector<Matrix> scores;      ///< per subject, K x N_l squared distances
};

/**
 * Labels every test frame from the common bases alone. Ties go to the
 * smallest class id. Labels in the test set, if any, are ignored.
 */
Prediction predict(const GroupedDataset& test, const Matrix& common_bases, DecisionRule rule);
Prediction predict(const GroupedDataset& test, const Posterior& post, DecisionRule rule);

using CountMatrix = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>;

struct EvalReport {
    std::vector<double> subject_accuracy;
    std::vector<long> subject_frames;
    double pooled_accuracy = 0.0;
    /// Rows are true classes, columns predicted classes.
    CountMatrix confusion;
};

EvalReport evaluate(const Prediction& pred, const std::vector<LabelVector>& truth, int num_classes);

struct TrainTestSplit {
    GroupedDataset train;
    GroupedDataset test;
};

/**
 * Contiguous temporal split per subject. The last ceil(holdout * N_l) frames
 * form the test set; the training set is the first
 * ceil(train_fraction * (N_l - n_test)) frames. The test suffix does not
 * depend on train_fraction.
 */
TrainTestSplit temporal_split(const GroupedDataset& data, double train_fraction, double holdout);

struct LearningCurvePoint {
    double fraction = 1.0;
    EvalReport report;
};

/**
 * Fits on growing temporal prefixes and scores each fit on the same held-out
 * suffix. Throws DataError if a prefix misses a class for some subject.
 */
std::vector<LearningCurvePoint> learning_curve(const GroupedDataset& data, const Hyperparams& h,
                                               const FitOptions& opts,
                                               const std::vector<double>& fractions,
                                               double holdout = 0.3,
                                               DecisionRule rule = DecisionRule::kNearestBasis);

/**
 * Optimal one-to-one assignment of estimated columns to reference columns
 * maximizing total cosine similarity (Hungarian algorithm). Returns
 * match[k] = estimated column assigned to reference column k.
 */
std::vector<int> match_columns(const Matrix& estimated, const Matrix& reference);

/// Cosine similarity of two vectors; 0 if either is zero.
double cosine_similarity(const Vector& u, const Vector& v);

} // namespace bgnmf
