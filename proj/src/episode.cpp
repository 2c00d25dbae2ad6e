#include "afr/episode.hpp"

#include <algorithm>
#include <numeric>

#include "afr/errors.hpp"

namespace afr::episodes {

using numerics::Matrix;

namespace {

// First `count` entries of a seeded partial Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, numerics::Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + rng.uniform_index(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

void copy_feature(const FeatureStore& store, std::size_t record, std::span<double> dst) {
    auto src = store.feature(record);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<double>(src[j]);
}

}  // namespace

Matrix Episode::support_of(std::size_t label) const {
    const std::size_t k = k_shot();
    Matrix out(k, dim());
    for (std::size_t i = 0; i < k; ++i) {
        auto src = support.row(label * k + i);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Episode sample_episode(const FeatureStore& novel, const EpisodeSpec& spec, const semantics::SemanticTable* semantics,
                       const std::vector<std::string>& base_classes, numerics::Rng& rng) {
    if (spec.n_way < 1 || spec.k_shot < 1 || spec.queries_per_class < 1) {
        throw ConfigError("n_way, k_shot and queries_per_class must all be >= 1");
    }
    const auto classes = novel.class_names();
    if (classes.size() < spec.n_way) {
        throw SamplingError("need " + std::to_string(spec.n_way) + " novel classes, store has " +
                            std::to_string(classes.size()));
    }
    const std::size_t per_class = spec.k_shot + spec.queries_per_class;
    for (const auto& c : classes) {
        const std::size_t have = novel.records_of(c).size();
        if (have < per_class) {
            throw SamplingError("class '" + c + "' has " + std::to_string(have) + " records, needs " +
                                std::to_string(per_class) + " (k_shot + queries)");
        }
    }
    if (spec.beta > 0 && semantics == nullptr) throw ConfigError("beta > 0 requires a semantic table");

    Episode ep;
    ep.support = Matrix(spec.n_way * spec.k_shot, novel.dim());
    ep.query = Matrix(spec.n_way * spec.queries_per_class, novel.dim());
    for (std::size_t picked : sample_without_replacement(classes.size(), spec.n_way, rng)) {
        ep.class_names.push_back(classes[picked]);
    }
    for (std::size_t label = 0; label < spec.n_way; ++label) {
        const auto& records = novel.records_of(ep.class_names[label]);
        const auto chosen = sample_without_replacement(records.size(), per_class, rng);
        for (std::size_t i = 0; i < per_class; ++i) {
            const std::size_t record = records[chosen[i]];
            if (i < spec.k_shot) {
                copy_feature(novel, record, ep.support.row(label * spec.k_shot + i));
                ep.support_labels.push_back(label);
                ep.support_records.push_back(record);
            } else {
                copy_feature(novel, record, ep.query.row(label * spec.queries_per_class + (i - spec.k_shot)));
                ep.query_labels.push_back(label);
                ep.query_records.push_back(record);
            }
        }
    }
    if (spec.beta > 0) {
        for (const auto& name : ep.class_names) {
            ep.selections.push_back(semantics::select_related(name, *semantics, base_classes, spec.beta));
        }
    }
    return ep;
}

void attach_prototypes(Episode& ep, const regularizer::PrototypeSet& base_prototypes) {
    ep.prototypes.clear();
    for (const auto& sel : ep.selections) ep.prototypes.push_back(base_prototypes.subset(sel.class_names()));
}

}  // namespace afr::episodes
