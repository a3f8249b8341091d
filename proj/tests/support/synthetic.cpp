#include "synthetic.hpp"

#include <random>

namespace bgnmf::testing {

namespace {

double positive_gamma(std::mt19937_64& rng, double shape) {
    std::gamma_distribution<double> g(shape, 1.0 / shape);
    for (;;) {
        const double v = g(rng);
        if (v > 0.0 && std::isfinite(v)) return v;
    }
}

} // namespace

SampledData sample_separated(const SeparatedFamily& f, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    LatentState latent;
    latent.common.resize(f.features, f.classes);
    for (Eigen::Index k = 0; k < f.classes; ++k) {
        for (Eigen::Index m = 0; m < f.features; ++m) {
            latent.common(m, k) = positive_gamma(rng, f.common_shape);
            if (m * f.classes / f.features == k) latent.common(m, k) *= f.boost;
        }
    }
    std::vector<LabelVector> labels;
    for (int l = 0; l < f.subjects; ++l) {
        Matrix ind(f.features, f.individual_bases);
        for (Eigen::Index i = 0; i < ind.size(); ++i) ind.data()[i] = positive_gamma(rng, 1.0);
        Matrix act(f.individual_bases, f.frames);
        for (Eigen::Index i = 0; i < act.size(); ++i) {
            act.data()[i] = f.activation_scale * positive_gamma(rng, 1.0);
        }
        latent.individual.push_back(std::move(ind));
        latent.activations.push_back(std::move(act));
        labels.push_back(cyclic_labels(f.frames, f.classes, f.run_length));
    }
    SampledData out;
    out.data = sample_observations(latent, labels, seed + 0x9e3779b97f4a7c15ULL);
    out.latent = std::move(latent);
    return out;
}

} // namespace bgnmf::testing
