#include "afr/protocol.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include "afr/errors.hpp"

namespace afr::episodes {

using nlohmann::json;

namespace {

const char* baseline_name(trainer::Baseline b) { return b == trainer::Baseline::mixup ? "mixup" : "none"; }

}  // namespace

AccuracyStats aggregate_accuracies(std::span<const double> values) {
    AccuracyStats s;
    if (values.empty()) return s;
    double total = 0.0;
    for (double v : values) total += v;
    const double t = static_cast<double>(values.size());
    s.mean = total / t;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.ci95 = 1.96 * std::sqrt(ss / (t - 1.0)) / std::sqrt(t);
    }
    return s;
}

std::string format_summary(double mean, double ci95) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f \xC2\xB1 %.2f%%", mean, ci95);
    return buf;
}

json config_echo(const EpisodeSpec& spec, const trainer::TrainConfig& cfg) {
    return {
        {"n_way", spec.n_way},
        {"k_shot", spec.k_shot},
        {"queries_per_class", spec.queries_per_class},
        {"episodes", spec.episodes},
        {"beta", spec.beta},
        {"mu1", cfg.loss.mu1},
        {"mu2", cfg.loss.mu2},
        {"tau", cfg.loss.tau},
        {"normalize_for_sc", cfg.loss.normalize_for_sc},
        {"sc_sign", cfg.loss.sc_sign == losses::ScSign::standard ? "standard" : "paper"},
        {"mse_norm", cfg.loss.mse_norm == losses::MseNorm::squared_mean ? "squared_mean" : "l2"},
        {"epochs", cfg.epochs},
        {"learning_rate", cfg.learning_rate},
        {"weight_decay", cfg.weight_decay},
        {"seed", cfg.seed},
        {"reduction", cfg.reduction},
        {"baseline", baseline_name(cfg.baseline)},
        {"ablation",
         {{"instance_attention", cfg.ablation.instance_attention},
          {"channel_attention", cfg.ablation.channel_attention},
          {"sc_loss", cfg.ablation.sc_loss},
          {"mse_loss", cfg.ablation.mse_loss}}},
    };
}

json report_to_json(const RunReport& report) {
    return {
        {"config", report.config},
        {"per_episode", report.per_episode_accuracy},
        {"failed_episodes", report.failed_episodes},
        {"mean", report.mean},
        {"ci95", report.ci95},
        {"failures", report.failures},
        {"summary", report.summary},
    };
}

RunReport run_protocol(const FeatureStore& base, const FeatureStore& novel, const semantics::SemanticTable* semantics,
                       const EpisodeSpec& spec, const trainer::TrainConfig& cfg, std::size_t workers) {
    if (spec.episodes < 1) throw ConfigError("episodes must be >= 1");
    if (spec.beta > 0 && base.dim() != novel.dim()) {
        throw DataError("base store dim " + std::to_string(base.dim()) + " differs from novel store dim " +
                        std::to_string(novel.dim()));
    }
    const std::vector<std::string> base_classes = base.class_names();
    regularizer::PrototypeSet base_prototypes;
    if (spec.beta > 0) {
        if (semantics == nullptr) throw ConfigError("beta > 0 requires label embeddings");
        if (spec.beta > base_classes.size()) {
            throw ConfigError("beta " + std::to_string(spec.beta) + " exceeds the " +
                              std::to_string(base_classes.size()) + " base classes");
        }
        base_prototypes = regularizer::compute_prototypes(base, base_classes);
    }

    std::vector<std::optional<double>> accuracy(spec.episodes);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto work = [&] {
        while (!abort.load()) {
            const std::size_t e = next.fetch_add(1);
            if (e >= spec.episodes) return;
            try {
                numerics::Rng rng(cfg.seed, e);
                Episode ep = sample_episode(novel, spec, semantics, base_classes, rng);
                ep.index = e;
                if (spec.beta > 0) attach_prototypes(ep, base_prototypes);
                const auto model = trainer::train_episode(ep, cfg);
                accuracy[e] = 100.0 * trainer::evaluate_episode(model, ep);
            } catch (const DivergenceError&) {
                accuracy[e].reset();
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                abort.store(true);
            }
        }
    };

    const std::size_t threads = std::max<std::size_t>(1, std::min(workers, spec.episodes));
    if (threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    RunReport report;
    report.episodes = spec.episodes;
    report.config = config_echo(spec, cfg);
    for (std::size_t e = 0; e < spec.episodes; ++e) {
        if (accuracy[e]) {
            report.per_episode_accuracy.push_back(*accuracy[e]);
        } else {
            report.failed_episodes.push_back(e);
        }
    }
    report.failures = report.failed_episodes.size();
    const auto stats = aggregate_accuracies(report.per_episode_accuracy);
    report.mean = stats.mean;
    report.ci95 = stats.ci95;
    report.summary = format_summary(report.mean, report.ci95);
    return report;
}

bool failure_rate_exceeded(const RunReport& report) {
    return report.failures * 100 > report.episodes;
}

}  // namespace afr::episodes
