#include "afr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "afr/errors.hpp"
#include "afr/mixup.hpp"

namespace afr::trainer {

using losses::Classifier;
using losses::LossBreakdown;
using losses::RegularizedSet;
using numerics::Matrix;
using regularizer::AfrParams;

namespace {

constexpr std::uint64_t kInitStream = 0xA1F0;
constexpr std::uint64_t kMixupStream = 0xB2E1;

void copy_into(std::span<double> dst, std::size_t& at, const Matrix& m) {
    auto v = m.values();
    std::copy(v.begin(), v.end(), dst.begin() + static_cast<std::ptrdiff_t>(at));
    at += v.size();
}

void copy_from(std::span<const double> src, std::size_t& at, Matrix& m) {
    auto v = m.values();
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(at), src.begin() + static_cast<std::ptrdiff_t>(at + v.size()),
              v.begin());
    at += v.size();
}

losses::SoftTargetRows mixup_rows(const episodes::Episode& ep, numerics::Rng& rng) {
    const std::size_t m = ep.support.rows();
    std::vector<std::size_t> partner(m);
    std::iota(partner.begin(), partner.end(), 0);
    for (std::size_t i = m; i > 1; --i) std::swap(partner[i - 1], partner[rng.uniform_index(i)]);

    losses::SoftTargetRows rows{Matrix(m, ep.dim()), Matrix(m, ep.n_way())};
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = partner[i];
        auto mixed = episodes::mixup_features(ep.support.row(i), ep.support.row(j), rng);
        std::copy(mixed.feature.begin(), mixed.feature.end(), rows.features.row(i).begin());
        rows.targets(i, ep.support_labels[i]) += mixed.weight_a;
        rows.targets(i, ep.support_labels[j]) += mixed.weight_b;
    }
    return rows;
}

}  // namespace

EpisodeObjective::EpisodeObjective(const episodes::Episode& episode, const TrainConfig& cfg)
    : episode_(episode), loss_cfg_(cfg.loss), reduction_(cfg.reduction) {
    if (episode.n_way() < 1 || episode.k_shot() < 1) throw ConfigError("episode has no support rows");
    if (!cfg.ablation.sc_loss) loss_cfg_.mu1 = 0.0;
    if (!cfg.ablation.mse_loss) loss_cfg_.mu2 = 0.0;
    const bool has_prototypes = episode.beta() > 0;
    if (has_prototypes && episode.prototypes.size() != episode.n_way()) {
        throw ConfigError("episode prototypes were not attached");
    }
    use_instance_ = has_prototypes && cfg.ablation.instance_attention;
    use_channel_ = has_prototypes && cfg.ablation.channel_attention;
    switches_ = {use_instance_, use_channel_};

    const std::size_t d = episode.dim();
    const std::size_t n = episode.n_way();
    auto add_block = [&](std::string name, std::size_t size) {
        blocks_.push_back({std::move(name), count_, size});
        count_ += size;
    };
    if (use_instance_) {
        for (const char* name : {"W_q", "W_k", "W_v", "W_p"}) add_block(name, d * d);
    }
    if (use_channel_) {
        if (reduction_ < 2 || d % reduction_ != 0) {
            throw ConfigError("reduction " + std::to_string(reduction_) + " must be >= 2 and divide dim " +
                              std::to_string(d));
        }
        const std::size_t h = d / reduction_;
        add_block("FC1", d * h + h);
        add_block("FC2", h * d + d);
    }
    add_block("classifier", n * d + n);

    for (std::size_t label = 0; label < n; ++label) {
        supports_.push_back(episode.support_of(label));
        queries_.push_back(regularizer::support_query(supports_.back()));
    }
}

AfrParams EpisodeObjective::blank_afr() const {
    AfrParams p;
    p.instance = regularizer::InstanceAttentionParams::zeros(episode_.dim());
    if (use_channel_) p.channel = regularizer::ChannelAttentionParams::zeros(episode_.dim(), reduction_);
    p.channel.reduction = reduction_;
    return p;
}

AfrParams EpisodeObjective::initial_afr(numerics::Rng& rng) const {
    AfrParams p = blank_afr();
    p.instance = regularizer::InstanceAttentionParams::glorot(episode_.dim(), rng);
    if (use_channel_) p.channel = regularizer::ChannelAttentionParams::glorot(episode_.dim(), reduction_, rng);
    return p;
}

std::vector<double> EpisodeObjective::pack(const AfrParams& afr, const Classifier& classifier) const {
    std::vector<double> flat(count_);
    std::size_t at = 0;
    if (use_instance_) {
        for (const Matrix* m : {&afr.instance.w_q, &afr.instance.w_k, &afr.instance.w_v, &afr.instance.w_p}) {
            copy_into(flat, at, *m);
        }
    }
    if (use_channel_) {
        for (const Matrix* m : {&afr.channel.w_fc1, &afr.channel.b_fc1, &afr.channel.w_fc2, &afr.channel.b_fc2}) {
            copy_into(flat, at, *m);
        }
    }
    copy_into(flat, at, classifier.weight);
    copy_into(flat, at, classifier.bias);
    return flat;
}

void EpisodeObjective::unpack(std::span<const double> flat, AfrParams& afr, Classifier& classifier) const {
    if (flat.size() != count_) throw ShapeError("parameter vector has the wrong length");
    const std::size_t d = episode_.dim();
    if (afr.instance.w_q.rows() != d || afr.channel.reduction != reduction_ ||
        (use_channel_ && afr.channel.w_fc1.rows() != d)) {
        afr = blank_afr();
    }
    if (classifier.weight.rows() != episode_.n_way() || classifier.weight.cols() != d) {
        classifier = Classifier::zeros(episode_.n_way(), d);
    }
    std::size_t at = 0;
    if (use_instance_) {
        for (Matrix* m : {&afr.instance.w_q, &afr.instance.w_k, &afr.instance.w_v, &afr.instance.w_p}) {
            copy_from(flat, at, *m);
        }
    }
    if (use_channel_) {
        for (Matrix* m : {&afr.channel.w_fc1, &afr.channel.b_fc1, &afr.channel.w_fc2, &afr.channel.b_fc2}) {
            copy_from(flat, at, *m);
        }
    }
    copy_from(flat, at, classifier.weight);
    copy_from(flat, at, classifier.bias);
}

std::vector<RegularizedSet> EpisodeObjective::regularized_sets(const AfrParams& afr) const {
    std::vector<RegularizedSet> sets;
    sets.reserve(supports_.size());
    for (std::size_t label = 0; label < supports_.size(); ++label) {
        Matrix fused;
        if (episode_.beta() > 0) {
            fused = regularizer::afr_forward(queries_[label], episode_.prototypes[label].vectors, afr, switches_).p_bar;
        }
        sets.push_back({supports_[label], std::move(fused), label});
    }
    return sets;
}

LossBreakdown EpisodeObjective::evaluate(std::span<const double> flat, std::vector<double>* grad,
                                         const losses::SoftTargetRows* extra) const {
    AfrParams afr = blank_afr();
    Classifier classifier = Classifier::zeros(episode_.n_way(), episode_.dim());
    unpack(flat, afr, classifier);

    std::vector<regularizer::AfrTrace> traces;
    std::vector<RegularizedSet> sets;
    for (std::size_t label = 0; label < supports_.size(); ++label) {
        Matrix fused;
        if (episode_.beta() > 0) {
            traces.push_back(
                regularizer::afr_forward(queries_[label], episode_.prototypes[label].vectors, afr, switches_));
            fused = traces.back().p_bar;
        }
        sets.push_back({supports_[label], std::move(fused), label});
    }

    if (grad == nullptr) return losses::total_loss(sets, classifier, loss_cfg_, nullptr, extra);

    losses::LossGradients lg;
    const LossBreakdown out = losses::total_loss(sets, classifier, loss_cfg_, &lg, extra);

    AfrParams afr_grad = blank_afr();
    if (use_instance_ || use_channel_) {
        for (std::size_t label = 0; label < traces.size(); ++label) {
            regularizer::afr_backward(traces[label], lg.sets[label].fused, afr, switches_, afr_grad);
        }
    }
    *grad = pack(afr_grad, lg.classifier);
    return out;
}

TrainedModel train_episode(const episodes::Episode& episode, const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    const EpisodeObjective objective(episode, cfg);

    const numerics::Rng stream(cfg.seed, episode.index);
    numerics::Rng init_rng = stream.fork(kInitStream);
    numerics::Rng mixup_rng = stream.fork(kMixupStream);

    TrainedModel model;
    model.afr = objective.initial_afr(init_rng);
    model.classifier = Classifier::zeros(episode.n_way(), episode.dim());
    std::vector<double> params = objective.pack(model.afr, model.classifier);

    numerics::AdamState adam(params.size());
    adam.learning_rate = cfg.learning_rate;
    adam.weight_decay = cfg.weight_decay;

    std::vector<double> grad;
    model.loss_trace.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        losses::SoftTargetRows extra;
        const bool use_mixup = cfg.baseline == Baseline::mixup;
        if (use_mixup) extra = mixup_rows(episode, mixup_rng);
        LossBreakdown loss;
        try {
            loss = objective.evaluate(params, &grad, use_mixup ? &extra : nullptr);
        } catch (const NumericError& e) {
            throw DivergenceError(e.what(), epoch);
        }
        if (!std::isfinite(loss.total) ||
            !std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); })) {
            throw DivergenceError("non-finite training loss", epoch);
        }
        model.loss_trace.push_back(loss);
        numerics::adam_step(params, grad, adam);
    }
    objective.unpack(params, model.afr, model.classifier);
    return model;
}

Prediction predict(const TrainedModel& model, std::span<const double> query) {
    if (query.size() != model.classifier.dim()) {
        throw ShapeError("query has dim " + std::to_string(query.size()) + ", classifier expects " +
                         std::to_string(model.classifier.dim()));
    }
    Prediction p;
    const Matrix logits = model.classifier.logits(Matrix::row_vector(query));
    p.logits.assign(logits.values().begin(), logits.values().end());
    p.label = static_cast<std::size_t>(std::max_element(p.logits.begin(), p.logits.end()) - p.logits.begin());
    return p;
}

double evaluate_episode(const TrainedModel& model, const episodes::Episode& episode) {
    if (episode.query.rows() == 0) throw ConfigError("episode has no query rows");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < episode.query.rows(); ++i) {
        if (predict(model, episode.query.row(i)).label == episode.query_labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(episode.query.rows());
}

}  // namespace afr::trainer
