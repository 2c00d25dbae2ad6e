#include "afr/gradcheck.hpp"

#include <algorithm>

#include "afr/episode.hpp"
#include "afr/errors.hpp"
#include "afr/trainer.hpp"

namespace afr::trainer {

using numerics::Matrix;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, double scale, numerics::Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = scale * rng.normal();
    return m;
}

episodes::Episode miniature_episode(const GradcheckOptions& o, numerics::Rng& rng) {
    episodes::Episode ep;
    ep.index = 0;
    for (std::size_t c = 0; c < o.n_way; ++c) ep.class_names.push_back("novel_" + std::to_string(c));
    ep.support = random_matrix(o.n_way * o.k_shot, o.dim, 1.0, rng);
    ep.query = random_matrix(o.n_way, o.dim, 1.0, rng);
    for (std::size_t c = 0; c < o.n_way; ++c) {
        for (std::size_t k = 0; k < o.k_shot; ++k) ep.support_labels.push_back(c);
        ep.query_labels.push_back(c);
    }
    for (std::size_t c = 0; c < o.n_way; ++c) {
        semantics::SelectionResult sel;
        sel.novel_class = ep.class_names[c];
        sel.beta = o.beta;
        regularizer::PrototypeSet protos;
        for (std::size_t b = 0; b < o.beta; ++b) {
            const std::string name = "base_" + std::to_string(c) + "_" + std::to_string(b);
            sel.ranked.push_back({name, 0.0});
            protos.class_names.push_back(name);
        }
        protos.vectors = random_matrix(o.beta, o.dim, 1.0, rng);
        ep.selections.push_back(std::move(sel));
        ep.prototypes.push_back(std::move(protos));
    }
    return ep;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
    if (options.trials < 1) throw ConfigError("gradcheck needs at least one trial");
    if (options.beta < 1) throw ConfigError("gradcheck needs beta >= 1 to exercise the attention blocks");
    if (options.n_way < 2 || options.k_shot < 1) throw ConfigError("gradcheck needs n_way >= 2 and k_shot >= 1");

    TrainConfig cfg;
    cfg.loss = options.loss;
    cfg.reduction = options.reduction;

    GradcheckReport report;
    for (int trial = 0; trial < options.trials; ++trial) {
        numerics::Rng rng(options.seed + static_cast<std::uint64_t>(trial), 0);
        const episodes::Episode ep = miniature_episode(options, rng);
        const EpisodeObjective objective(ep, cfg);

        regularizer::AfrParams afr = objective.initial_afr(rng);
        afr.channel.b_fc1 = random_matrix(1, afr.channel.b_fc1.cols(), 0.1, rng);
        afr.channel.b_fc2 = random_matrix(1, afr.channel.b_fc2.cols(), 0.1, rng);
        losses::Classifier clf{random_matrix(ep.n_way(), ep.dim(), 0.5, rng), random_matrix(1, ep.n_way(), 0.1, rng)};
        const std::vector<double> params = objective.pack(afr, clf);

        std::vector<double> analytic;
        objective.evaluate(params, &analytic);
        const auto numeric = numerics::finite_diff_grad(
            [&](std::span<const double> p) { return objective.evaluate(p).total; }, params, options.step);

        if (report.blocks.empty()) {
            for (const auto& b : objective.blocks()) report.blocks.push_back({b.name, 0.0, true});
        }
        for (std::size_t i = 0; i < objective.blocks().size(); ++i) {
            const auto& b = objective.blocks()[i];
            std::vector<double> a(analytic.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                  analytic.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size));
            if (b.name == options.perturb_block) {
                for (double& v : a) v = v * 1.01 + 1e-3;
            }
            const std::vector<double> n(numeric.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                        numeric.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size));
            auto& r = report.blocks[i];
            r.max_relative_error = std::max(r.max_relative_error, numerics::max_relative_error(a, n));
            r.passed = r.max_relative_error < options.tolerance;
        }
    }
    report.passed = std::all_of(report.blocks.begin(), report.blocks.end(), [](const auto& b) { return b.passed; });
    return report;
}

}  // namespace afr::trainer
