#include "bgnmf/classify.hpp"

#include "bgnmf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace bgnmf {

DecisionRule parse_rule(const std::string& name) {
    if (name == "argmin" || name == "nearest") return DecisionRule::kNearestBasis;
    if (name == "scaled") return DecisionRule::kScaledNearestBasis;
    if (name == "argmax") return DecisionRule::kFarthestBasis;
    throw ConfigError("unknown decision rule '" + name + "' (expected argmin, argmax or scaled)");
}

std::string rule_name(DecisionRule rule) {
    switch (rule) {
    case DecisionRule::kNearestBasis:
        return "argmin";
    case DecisionRule::kScaledNearestBasis:
        return "scaled";
    case DecisionRule::kFarthestBasis:
        return "argmax";
    }
    return "argmin";
}

Prediction predict(const GroupedDataset& test, const Matrix& common_bases, DecisionRule rule) {
    const Eigen::Index num_classes = common_bases.cols();
    if (num_classes < 1) throw DataError("predict: no common bases");
    long total_frames = 0;
    for (const auto& s : test.subjects) {
        if (s.x.rows() != common_bases.rows()) {
            throw DataError("predict: subject '" + s.name + "' has " + std::to_string(s.x.rows()) +
                            " features but the bases have " + std::to_string(common_bases.rows()));
        }
        total_frames += s.frames();
    }
    if (total_frames == 0) throw DataError("predict: empty test set");

    const Vector norms = common_bases.colwise().squaredNorm().transpose();
    Prediction pred;
    for (const auto& s : test.subjects) {
        Matrix scores(num_classes, s.x.cols());
        LabelVector labels(static_cast<std::size_t>(s.x.cols()));
        for (Eigen::Index n = 0; n < s.x.cols(); ++n) {
            const auto x = s.x.col(n);
            for (Eigen::Index k = 0; k < num_classes; ++k) {
                const auto basis = common_bases.col(k);
                double scale = 1.0;
                if (rule == DecisionRule::kScaledNearestBasis) {
                    scale = norms(k) > 0.0 ? std::max(0.0, x.dot(basis) / norms(k)) : 0.0;
                }
                scores(k, n) = (x - scale * basis).squaredNorm();
            }
            Eigen::Index best = 0;
            for (Eigen::Index k = 1; k < num_classes; ++k) {
                const bool better = rule == DecisionRule::kFarthestBasis ? scores(k, n) > scores(best, n)
                                                                         : scores(k, n) < scores(best, n);
                if (better) best = k;
            }
            labels[static_cast<std::size_t>(n)] = static_cast<int>(best) + 1;
        }
        pred.scores.push_back(std::move(scores));
        pred.labels.push_back(std::move(labels));
    }
    return pred;
}

Prediction predict(const GroupedDataset& test, const Posterior& post, DecisionRule rule) {
    return predict(test, post.common.mean(), rule);
}

EvalReport evaluate(const Prediction& pred, const std::vector<LabelVector>& truth, int num_classes) {
    if (pred.labels.size() != truth.size()) {
        throw DataError("evaluate: " + std::to_string(pred.labels.size()) + " predicted subjects vs " +
                        std::to_string(truth.size()) + " truth subjects");
    }
    if (num_classes < 1) throw DataError("evaluate: need at least one class");
    EvalReport report;
    report.confusion = CountMatrix::Zero(num_classes, num_classes);
    long correct_total = 0;
    long frames_total = 0;
    for (std::size_t l = 0; l < truth.size(); ++l) {
        const auto& p = pred.labels[l];
        const auto& t = truth[l];
        if (p.size() != t.size()) {
            throw DataError("evaluate: subject " + std::to_string(l + 1) + " has " +
                            std::to_string(p.size()) + " predictions but " + std::to_string(t.size()) +
                            " truth labels");
        }
        long correct = 0;
        for (std::size_t n = 0; n < t.size(); ++n) {
            if (t[n] < 1 || t[n] > num_classes || p[n] < 1 || p[n] > num_classes) {
                throw DataError("evaluate: label outside 1.." + std::to_string(num_classes) +
                                " at subject " + std::to_string(l + 1) + ", frame " +
                                std::to_string(n + 1));
            }
            ++report.confusion(t[n] - 1, p[n] - 1);
            if (t[n] == p[n]) ++correct;
        }
        const auto frames = static_cast<long>(t.size());
        report.subject_frames.push_back(frames);
        report.subject_accuracy.push_back(frames > 0 ? static_cast<double>(correct) / frames : 0.0);
        correct_total += correct;
        frames_total += frames;
    }
    report.pooled_accuracy = frames_total > 0 ? static_cast<double>(correct_total) / frames_total : 0.0;
    return report;
}

namespace {

Subject slice(const Subject& s, Eigen::Index begin, Eigen::Index count) {
    Subject out;
    out.name = s.name;
    out.x = s.x.middleCols(begin, count);
    if (s.labels) {
        out.labels = LabelVector(s.labels->begin() + begin, s.labels->begin() + begin + count);
    }
    return out;
}

} // namespace

TrainTestSplit temporal_split(const GroupedDataset& data, double train_fraction, double holdout) {
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
        throw ConfigError("training fraction must lie in (0, 1]");
    }
    if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("holdout must lie in (0, 1)");
    TrainTestSplit split;
    for (std::size_t l = 0; l < data.subjects.size(); ++l) {
        const Subject& s = data.subjects[l];
        const Eigen::Index frames = s.x.cols();
        const auto n_test = static_cast<Eigen::Index>(std::ceil(holdout * static_cast<double>(frames)));
        const Eigen::Index pool = frames - n_test;
        const auto n_train = static_cast<Eigen::Index>(std::ceil(train_fraction * static_cast<double>(pool)));
        if (n_test < 1 || n_train < 1) {
            throw DataError("subject " + std::to_string(l + 1) + " has too few frames (" +
                            std::to_string(frames) + ") to split");
        }
        split.train.subjects.push_back(slice(s, 0, n_train));
        split.test.subjects.push_back(slice(s, pool, n_test));
    }
    return split;
}

std::vector<LearningCurvePoint> learning_curve(const GroupedDataset& data, const Hyperparams& h,
                                               const FitOptions& opts,
                                               const std::vector<double>& fractions, double holdout,
                                               DecisionRule rule) {
    if (fractions.empty()) throw ConfigError("learning curve needs at least one fraction");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) {
            throw ConfigError("learning-curve fractions must lie in (0, 1]");
        }
        if (i > 0 && fractions[i] < fractions[i - 1]) {
            throw ConfigError("learning-curve fractions must be sorted ascending");
        }
    }
    if (!data.labeled()) throw DataError("learning curve needs labeled data");

    std::vector<LearningCurvePoint> curve;
    for (double fraction : fractions) {
        TrainTestSplit split = temporal_split(data, fraction, holdout);
        for (std::size_t l = 0; l < split.train.subjects.size(); ++l) {
            const auto& y = *split.train.subjects[l].labels;
            const std::set<int> present(y.begin(), y.end());
            for (int k = 1; k <= h.K; ++k) {
                if (!present.contains(k)) {
                    throw DataError("training fraction " + std::to_string(fraction) + " leaves class " +
                                    std::to_string(k) + " unrepresented for subject " +
                                    std::to_string(l + 1) + " ('" + split.train.subjects[l].name + "')");
                }
            }
        }
        const FitResult fitted = fit(split.train, h, opts);
        const Prediction pred = predict(split.test, fitted.posterior, rule);
        curve.push_back({fraction, evaluate(pred, split.test.labels(), h.K)});
    }
    return curve;
}

double cosine_similarity(const Vector& u, const Vector& v) {
    const double denom = u.norm() * v.norm();
    return denom > 0.0 ? u.dot(v) / denom : 0.0;
}

std::vector<int> match_columns(const Matrix& estimated, const Matrix& reference) {
    if (estimated.rows() != reference.rows() || estimated.cols() < reference.cols()) {
        throw DataError("match_columns: incompatible shapes");
    }
    // Rectangular assignment with potentials; rows are reference columns,
    // columns are estimated columns, cost = -cosine. Indices are 1-based,
    // slot 0 is the virtual source.
    using std::size_t;
    const auto n = static_cast<size_t>(reference.cols());
    const auto m = static_cast<size_t>(estimated.cols());
    constexpr double inf = std::numeric_limits<double>::infinity();
    Matrix cost(n + 1, m + 1);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                -cosine_similarity(reference.col(static_cast<Eigen::Index>(i - 1)),
                                   estimated.col(static_cast<Eigen::Index>(j - 1)));
        }
    }
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<size_t> owner(m + 1, 0), way(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        owner[0] = i;
        size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const size_t i0 = owner[j0];
            double delta = inf;
            size_t j1 = 0;
            for (size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur =
                    cost(static_cast<Eigen::Index>(i0), static_cast<Eigen::Index>(j)) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const size_t j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> match(n, -1);
    for (size_t j = 1; j <= m; ++j) {
        if (owner[j] != 0) match[owner[j] - 1] = static_cast<int>(j - 1);
    }
    return match;
}

} // namespace bgnmf
