#include "checks.hpp"

#include <algorithm>

namespace bgnmf::testing {

PerturbationReport perturb_aux(const Posterior& post, const AuxState& aux, const GroupedDataset& data,
                               const Hyperparams& h) {
    const double base = elbo(post, aux, data, h);
    PerturbationReport report;
    AuxState moved = aux;
    auto score = [&] {
        report.max_gain = std::max(report.max_gain, elbo(post, moved, data, h) - base);
        ++report.moves;
    };
    const std::size_t bases = static_cast<std::size_t>(post.individual_bases());
    for (std::size_t l = 0; l < data.subjects.size(); ++l) {
        const Matrix& x = data.subjects[l].x;
        for (Eigen::Index n = 0; n < x.cols(); ++n) {
            for (Eigen::Index m = 0; m < x.rows(); ++m) {
                for (double step : {-1e-3, 1e-3}) {
                    const double p = std::clamp(aux.pi1[l](m, n) + step, 0.0, 1.0);
                    moved.pi1[l](m, n) = p;
                    moved.pi2[l](m, n) = 1.0 - p;
                    score();
                    moved.pi1[l](m, n) = aux.pi1[l](m, n);
                    moved.pi2[l](m, n) = aux.pi2[l](m, n);

                    moved.w[l](m, n) = aux.w[l](m, n) * (1.0 + step);
                    score();
                    moved.w[l](m, n) = aux.w[l](m, n);
                }
                for (std::size_t i = 0; i < bases; ++i) {
                    for (std::size_t j = 0; j < bases; ++j) {
                        if (i == j) continue;
                        const double step = std::min(1e-3, aux.psi[l][j](m, n));
                        moved.psi[l][i](m, n) = aux.psi[l][i](m, n) + step;
                        moved.psi[l][j](m, n) = aux.psi[l][j](m, n) - step;
                        score();
                        moved.psi[l][i](m, n) = aux.psi[l][i](m, n);
                        moved.psi[l][j](m, n) = aux.psi[l][j](m, n);
                    }
                }
            }
        }
    }
    return report;
}

} // namespace bgnmf::testing
