#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "afr/feature_store.hpp"
#include "afr/numerics.hpp"
#include "afr/regularizer.hpp"
#include "afr/semantics.hpp"

namespace afr::episodes {

struct EpisodeSpec {
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t queries_per_class = 15;
    std::size_t beta = 3;
    std::size_t episodes = 600;
};

// One N-way K-shot task. Support and query rows are grouped by class in
// label order; labels index class_names.
struct Episode {
    std::uint64_t index = 0;
    std::vector<std::string> class_names;
    numerics::Matrix support;
    std::vector<std::size_t> support_labels;
    numerics::Matrix query;
    std::vector<std::size_t> query_labels;
    // Record positions in the novel store, for disjointness checks.
    std::vector<std::size_t> support_records;
    std::vector<std::size_t> query_records;
    // One entry per class when beta > 0, otherwise empty.
    std::vector<semantics::SelectionResult> selections;
    std::vector<regularizer::PrototypeSet> prototypes;

    std::size_t n_way() const { return class_names.size(); }
    std::size_t k_shot() const { return class_names.empty() ? 0 : support.rows() / class_names.size(); }
    std::size_t beta() const { return selections.empty() ? 0 : selections.front().beta; }
    std::size_t dim() const { return support.cols(); }
    // K x d block of support rows for one class.
    numerics::Matrix support_of(std::size_t label) const;
};

// Samples classes and records without replacement. When spec.beta > 0 the
// semantic table must be given and selections are filled in; prototypes are
// left for attach_prototypes.
Episode sample_episode(const FeatureStore& novel, const EpisodeSpec& spec, const semantics::SemanticTable* semantics,
                       const std::vector<std::string>& base_classes, numerics::Rng& rng);

// Fills ep.prototypes from a prototype table covering every selected class.
void attach_prototypes(Episode& ep, const regularizer::PrototypeSet& base_prototypes);

}  // namespace afr::episodes
