#pragma once

#include <cstddef>
#include <cstdint>

#include "afr/feature_store.hpp"
#include "afr/numerics.hpp"
#include "afr/semantics.hpp"

namespace afr::episodes {

struct SynthConfig {
    std::size_t classes = 30;
    std::size_t per_class = 100;
    std::size_t feat_dim = 32;
    std::size_t sem_dim = 16;
    double cluster_spread = 1.5;
    double noise = 0.3;
};

struct SynthData {
    FeatureStore store;
    semantics::SemanticTable semantics;
};

// Class c gets a semantic vector s_c uniform on the unit sphere and a feature
// mean A s_c, where A is one fixed random map with orthonormal columns (or
// rows, when feat_dim < sem_dim) scaled by cluster_spread. Features are the
// mean plus isotropic Gaussian noise. Semantic cosine therefore tracks
// feature-mean cosine.
SynthData synth_generate(std::size_t classes, std::size_t per_class, std::size_t feat_dim, std::size_t sem_dim,
                         double cluster_spread, double noise, numerics::Rng& rng);
SynthData synth_generate(const SynthConfig& cfg, numerics::Rng& rng);

struct SyntheticBenchmark {
    FeatureStore base;
    FeatureStore novel;
    semantics::SemanticTable semantics;
};

// The last novel_classes classes (in name order) become the novel store.
SyntheticBenchmark split_base_novel(const SynthData& data, std::size_t novel_classes);

// 20 base + 10 novel classes, d = 32, 16-d semantics, noise 0.3.
SyntheticBenchmark default_synthetic_benchmark(std::uint64_t seed);

}  // namespace afr::episodes
