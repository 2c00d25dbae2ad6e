#pragma once

#include <span>
#include <vector>

#include "afr/numerics.hpp"

namespace afr::episodes {

struct MixedFeature {
    std::vector<double> feature;
    double weight_a = 0.0;  // label weight on a's class
    double weight_b = 0.0;  // label weight on b's class
};

// lambda * a + (1 - lambda) * b with matching label weights.
MixedFeature mixup_features(std::span<const double> a, std::span<const double> b, double lambda);
// lambda ~ Beta(1, 1).
MixedFeature mixup_features(std::span<const double> a, std::span<const double> b, numerics::Rng& rng);

}  // namespace afr::episodes
