#include "afr/mixup.hpp"

#include "afr/errors.hpp"

namespace afr::episodes {

MixedFeature mixup_features(std::span<const double> a, std::span<const double> b, double lambda) {
    if (a.size() != b.size()) throw ShapeError("mixup: feature lengths differ");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("mixup: lambda must lie in [0, 1]");
    MixedFeature out;
    out.feature.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out.feature[i] = lambda * a[i] + (1.0 - lambda) * b[i];
    out.weight_a = lambda;
    out.weight_b = 1.0 - lambda;
    return out;
}

MixedFeature mixup_features(std::span<const double> a, std::span<const double> b, numerics::Rng& rng) {
    // Beta(1, 1) is the uniform distribution on [0, 1].
    return mixup_features(a, b, rng.uniform());
}

}  // namespace afr::episodes
