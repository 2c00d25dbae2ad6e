#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "afr/numerics.hpp"
#include "afr/regularizer.hpp"

namespace afr::testing {

using numerics::Matrix;
using numerics::Rng;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = scale * rng.normal();
    return m;
}

inline std::vector<Matrix*> blocks_of(regularizer::AfrParams& p) {
    return {&p.instance.w_q, &p.instance.w_k, &p.instance.w_v, &p.instance.w_p,
            &p.channel.w_fc1, &p.channel.b_fc1, &p.channel.w_fc2, &p.channel.b_fc2};
}

inline std::vector<double> flatten(const Matrix& m) { return {m.values().begin(), m.values().end()}; }

// Central differences of f with respect to every entry of *target.
inline std::vector<double> numeric_gradient(Matrix* target, const std::function<double()>& f, double h = 1e-5) {
    std::vector<double> g(target->size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        double& x = target->values()[i];
        const double saved = x;
        x = saved + h;
        const double up = f();
        x = saved - h;
        const double down = f();
        x = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

}  // namespace afr::testing

#include "afr/episode.hpp"
#include "afr/synth.hpp"

namespace afr::testing {

// Episode `index` of a protocol run over bench, sampled the same way the
// protocol runner does it.
inline episodes::Episode bench_episode(const episodes::SyntheticBenchmark& bench, const episodes::EpisodeSpec& spec,
                                       std::uint64_t seed, std::uint64_t index) {
    Rng rng(seed, index);
    const auto base_classes = bench.base.class_names();
    auto ep = episodes::sample_episode(bench.novel, spec, spec.beta > 0 ? &bench.semantics : nullptr, base_classes,
                                       rng);
    ep.index = index;
    if (spec.beta > 0) episodes::attach_prototypes(ep, regularizer::compute_prototypes(bench.base, base_classes));
    return ep;
}

}  // namespace afr::testing
