#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "afr/episode.hpp"
#include "afr/losses.hpp"
#include "afr/regularizer.hpp"

namespace afr::trainer {

struct AblationFlags {
    bool instance_attention = true;
    bool channel_attention = true;
    bool sc_loss = true;
    bool mse_loss = true;
};

// Extra comparison regulariser applied on top of the configured objective.
enum class Baseline { none, mixup };

struct TrainConfig {
    int epochs = 1000;
    double learning_rate = 0.001;
    double weight_decay = 0.0001;
    losses::LossConfig loss;
    AblationFlags ablation;
    std::uint64_t seed = 0;
    std::size_t reduction = regularizer::kDefaultReduction;
    Baseline baseline = Baseline::none;
};

struct TrainedModel {
    losses::Classifier classifier;
    regularizer::AfrParams afr;
    std::vector<losses::LossBreakdown> loss_trace;
};

struct ParameterBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
};

// The training loss of one episode as a function of a flat parameter vector.
// Only blocks that influence the loss are part of the vector: attention
// blocks are dropped when beta is 0 or the stage is ablated.
class EpisodeObjective {
public:
    EpisodeObjective(const episodes::Episode& episode, const TrainConfig& cfg);

    const std::vector<ParameterBlock>& blocks() const { return blocks_; }
    std::size_t parameter_count() const { return count_; }
    const losses::LossConfig& loss_config() const { return loss_cfg_; }
    regularizer::AfrSwitches switches() const { return switches_; }

    // Zero parameters shaped for this objective.
    regularizer::AfrParams blank_afr() const;
    // Glorot-initialised attention weights; unused stages stay zero.
    regularizer::AfrParams initial_afr(numerics::Rng& rng) const;

    std::vector<double> pack(const regularizer::AfrParams& afr, const losses::Classifier& classifier) const;
    void unpack(std::span<const double> flat, regularizer::AfrParams& afr, losses::Classifier& classifier) const;

    // H_s for every class under the given parameters.
    std::vector<losses::RegularizedSet> regularized_sets(const regularizer::AfrParams& afr) const;

    // Loss at flat; when grad is non-null it receives d(total)/d(flat).
    losses::LossBreakdown evaluate(std::span<const double> flat, std::vector<double>* grad = nullptr,
                                   const losses::SoftTargetRows* extra = nullptr) const;

private:
    const episodes::Episode& episode_;
    losses::LossConfig loss_cfg_;
    regularizer::AfrSwitches switches_;
    std::size_t reduction_;
    bool use_instance_ = false;
    bool use_channel_ = false;
    std::vector<ParameterBlock> blocks_;
    std::size_t count_ = 0;
    std::vector<numerics::Matrix> supports_;
    std::vector<numerics::Matrix> queries_;
};

TrainedModel train_episode(const episodes::Episode& episode, const TrainConfig& cfg);

struct Prediction {
    std::size_t label = 0;
    std::vector<double> logits;
};

// Uses the classifier alone. Ties go to the lowest class index.
Prediction predict(const TrainedModel& model, std::span<const double> query);

// Fraction of query rows classified correctly.
double evaluate_episode(const TrainedModel& model, const episodes::Episode& episode);

}  // namespace afr::trainer
