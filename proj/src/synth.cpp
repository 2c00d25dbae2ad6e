#include "afr/synth.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "afr/errors.hpp"

namespace afr::episodes {

using numerics::Matrix;
using numerics::Rng;

namespace {

// rows x cols Gaussian matrix orthonormalised along its shorter side.
Matrix random_semi_orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
    const bool by_columns = rows >= cols;
    const std::size_t count = by_columns ? cols : rows;
    const std::size_t length = by_columns ? rows : cols;
    std::vector<std::vector<double>> basis;
    while (basis.size() < count) {
        std::vector<double> v(length);
        for (double& x : v) x = rng.normal();
        for (const auto& b : basis) {
            const double p = numerics::dot(v, b);
            for (std::size_t i = 0; i < length; ++i) v[i] -= p * b[i];
        }
        const double n = numerics::l2_norm(v);
        if (n < 1e-8) continue;
        for (double& x : v) x /= n;
        basis.push_back(std::move(v));
    }
    Matrix m(rows, cols);
    for (std::size_t k = 0; k < count; ++k) {
        for (std::size_t i = 0; i < length; ++i) {
            if (by_columns) m(i, k) = basis[k][i];
            else m(k, i) = basis[k][i];
        }
    }
    return m;
}

std::string class_name(std::size_t c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class_%03zu", c);
    return buf;
}

}  // namespace

SynthData synth_generate(std::size_t classes, std::size_t per_class, std::size_t feat_dim, std::size_t sem_dim,
                         double cluster_spread, double noise, Rng& rng) {
    if (classes < 1 || per_class < 1 || feat_dim < 1 || sem_dim < 1) {
        throw ConfigError("synthetic generator counts must all be >= 1");
    }
    if (!(noise >= 0.0) || !(cluster_spread > 0.0)) {
        throw ConfigError("noise must be >= 0 and cluster spread > 0");
    }
    const Matrix map = numerics::scale(random_semi_orthogonal(feat_dim, sem_dim, rng), cluster_spread);

    SynthData out{FeatureStore(feat_dim), {}};
    out.semantics.dim = sem_dim;
    std::vector<double> s(sem_dim);
    std::vector<double> mean(feat_dim);
    std::vector<double> feature(feat_dim);
    for (std::size_t c = 0; c < classes; ++c) {
        double n = 0.0;
        while (n < 1e-8) {
            for (double& x : s) x = rng.normal();
            n = numerics::l2_norm(s);
        }
        for (double& x : s) x /= n;
        for (std::size_t i = 0; i < feat_dim; ++i) mean[i] = numerics::dot(map.row(i), s);

        const std::string name = class_name(c);
        out.semantics.insert(name, s);
        for (std::size_t r = 0; r < per_class; ++r) {
            for (std::size_t i = 0; i < feat_dim; ++i) feature[i] = mean[i] + noise * rng.normal();
            out.store.add(name, std::span<const double>(feature));
        }
    }
    return out;
}

SynthData synth_generate(const SynthConfig& cfg, Rng& rng) {
    return synth_generate(cfg.classes, cfg.per_class, cfg.feat_dim, cfg.sem_dim, cfg.cluster_spread, cfg.noise, rng);
}

SyntheticBenchmark split_base_novel(const SynthData& data, std::size_t novel_classes) {
    const auto names = data.store.class_names();
    if (novel_classes < 1 || novel_classes >= names.size()) {
        throw ConfigError("novel class count must be in [1, " + std::to_string(names.size() - 1) + "]");
    }
    const std::set<std::string> novel(names.end() - static_cast<std::ptrdiff_t>(novel_classes), names.end());
    SyntheticBenchmark out{FeatureStore(data.store.dim()), FeatureStore(data.store.dim()), data.semantics};
    for (std::size_t r = 0; r < data.store.record_count(); ++r) {
        const auto& name = data.store.class_of(r);
        (novel.count(name) ? out.novel : out.base).add(name, data.store.feature(r));
    }
    return out;
}

SyntheticBenchmark default_synthetic_benchmark(std::uint64_t seed) {
    Rng rng(seed, 0);
    return split_base_novel(synth_generate(SynthConfig{}, rng), 10);
}

}  // namespace afr::episodes
