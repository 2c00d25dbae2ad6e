#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "afr/episode.hpp"
#include "afr/feature_store.hpp"
#include "afr/semantics.hpp"
#include "afr/trainer.hpp"

namespace afr::episodes {

// Accuracies are stored in percent, so mean and ci95 read like the usual
// "MM.MM +- C.CC%" table entries.
struct RunReport {
    std::vector<double> per_episode_accuracy;
    std::vector<std::uint64_t> failed_episodes;
    double mean = 0.0;
    double ci95 = 0.0;
    std::size_t failures = 0;
    std::size_t episodes = 0;
    nlohmann::json config;
    std::string summary;
};

struct AccuracyStats {
    double mean = 0.0;
    double ci95 = 0.0;
};

// mean and 1.96 * s / sqrt(T) with the Bessel-corrected s; ci95 is 0 for T < 2.
AccuracyStats aggregate_accuracies(std::span<const double> values);
std::string format_summary(double mean, double ci95);

nlohmann::json config_echo(const EpisodeSpec& spec, const trainer::TrainConfig& cfg);
nlohmann::json report_to_json(const RunReport& report);

// Episode e samples from Rng(cfg.seed, e), so results do not depend on the
// worker count. Divergent episodes are counted in failures and excluded.
RunReport run_protocol(const FeatureStore& base, const FeatureStore& novel, const semantics::SemanticTable* semantics,
                       const EpisodeSpec& spec, const trainer::TrainConfig& cfg, std::size_t workers = 1);

// More than 1% of the requested episodes failed.
bool failure_rate_exceeded(const RunReport& report);

}  // namespace afr::episodes
