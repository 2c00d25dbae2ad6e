#include "afr/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "afr/errors.hpp"
#include "afr/feature_store.hpp"
#include "afr/gradcheck.hpp"
#include "afr/protocol.hpp"
#include "afr/semantics.hpp"
#include "afr/synth.hpp"

namespace afr::cli {

using nlohmann::json;

namespace {

struct DataFlags {
    std::string base_features;
    std::string novel_features;
    std::string embeddings;
    bool synth = false;
    std::uint64_t synth_seed = 1;
};

struct TrainFlags {
    episodes::EpisodeSpec spec;
    trainer::TrainConfig train;
    std::size_t workers = 1;
    bool no_instance = false;
    bool no_channel = false;
    bool no_sc = false;
    bool no_mse = false;
    bool raw_dot = false;
    std::string baseline = "none";
    std::string sc_sign = "standard";
    std::string mse_norm = "squared_mean";
    bool pretty = false;

    void finalize() {
        train.ablation = {!no_instance, !no_channel, !no_sc, !no_mse};
        train.loss.normalize_for_sc = !raw_dot;
        train.baseline = baseline == "mixup" ? trainer::Baseline::mixup : trainer::Baseline::none;
        train.loss.sc_sign = sc_sign == "paper" ? losses::ScSign::paper : losses::ScSign::standard;
        train.loss.mse_norm = mse_norm == "l2" ? losses::MseNorm::l2 : losses::MseNorm::squared_mean;
    }
};

std::size_t default_workers() {
    if (const char* env = std::getenv("AFR_WORKERS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    return 1;
}

void add_data_flags(CLI::App* cmd, DataFlags& d) {
    cmd->add_option("--base-features", d.base_features, "Base-class feature store (AFRF or .csv)");
    cmd->add_option("--novel-features", d.novel_features, "Novel-class feature store (AFRF or .csv)");
    cmd->add_option("--embeddings", d.embeddings, "Label embedding JSON");
    cmd->add_flag("--synth", d.synth, "Use the built-in synthetic benchmark instead of files");
    cmd->add_option("--synth-seed", d.synth_seed, "Seed of the synthetic benchmark");
}

void add_train_flags(CLI::App* cmd, TrainFlags& t, bool single_k) {
    cmd->add_option("--n-way", t.spec.n_way, "Classes per episode")->check(CLI::PositiveNumber);
    if (single_k) cmd->add_option("--k-shot", t.spec.k_shot, "Support samples per class")->check(CLI::PositiveNumber);
    cmd->add_option("--queries", t.spec.queries_per_class, "Query samples per class")->check(CLI::PositiveNumber);
    cmd->add_option("--episodes", t.spec.episodes, "Number of sampled tasks")->check(CLI::PositiveNumber);
    cmd->add_option("--beta", t.spec.beta, "Related base classes per novel class (0 disables regularization)");
    cmd->add_option("--mu1", t.train.loss.mu1, "Weight of the supervised contrastive loss");
    cmd->add_option("--mu2", t.train.loss.mu2, "Weight of the mean-gap MSE loss");
    cmd->add_option("--tau", t.train.loss.tau,
                    "Contrastive temperature (no published value; 0.1 chosen here)");
    cmd->add_option("--epochs", t.train.epochs, "Optimizer steps per episode")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", t.train.learning_rate, "Adam learning rate");
    cmd->add_option("--wd", t.train.weight_decay, "Coupled L2 weight decay");
    cmd->add_option("--reduction", t.train.reduction, "Squeeze-excite reduction ratio");
    cmd->add_option("--seed", t.train.seed, "Master seed; episode e uses stream e");
    cmd->add_option("--workers", t.workers, "Parallel episode workers (env AFR_WORKERS)")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-instance-att", t.no_instance, "Disable instance attention");
    cmd->add_flag("--no-channel-att", t.no_channel, "Disable channel attention");
    cmd->add_flag("--no-sc", t.no_sc, "Disable the supervised contrastive loss");
    cmd->add_flag("--no-mse", t.no_mse, "Disable the mean-gap MSE loss");
    cmd->add_flag("--raw-dot", t.raw_dot, "Use raw dot products in the contrastive loss");
    cmd->add_option("--baseline", t.baseline, "Extra comparison regularizer")
        ->check(CLI::IsMember({"none", "mixup"}));
    cmd->add_option("--sc-sign", t.sc_sign, "Contrastive loss sign convention")
        ->check(CLI::IsMember({"standard", "paper"}));
    cmd->add_option("--mse-norm", t.mse_norm, "Mean-gap norm")->check(CLI::IsMember({"squared_mean", "l2"}));
    cmd->add_flag("--pretty", t.pretty, "Human-readable output instead of JSON");
}

struct LoadedData {
    episodes::FeatureStore base;
    episodes::FeatureStore novel;
    std::optional<semantics::SemanticTable> semantics;
};

LoadedData load_data(const DataFlags& d, std::size_t beta) {
    LoadedData out;
    if (d.synth) {
        auto bench = episodes::default_synthetic_benchmark(d.synth_seed);
        out.base = std::move(bench.base);
        out.novel = std::move(bench.novel);
        out.semantics = std::move(bench.semantics);
        return out;
    }
    if (d.novel_features.empty()) throw ConfigError("--novel-features is required unless --synth is given");
    out.novel = episodes::load_feature_store(d.novel_features);
    if (beta > 0) {
        if (d.base_features.empty()) throw ConfigError("--base-features is required when --beta > 0");
        if (d.embeddings.empty()) throw ConfigError("--embeddings is required when --beta > 0");
    }
    if (!d.base_features.empty()) out.base = episodes::load_feature_store(d.base_features, out.novel.dim());
    if (!d.embeddings.empty()) out.semantics = semantics::load_semantic_table(d.embeddings);
    return out;
}

episodes::RunReport run_once(const LoadedData& data, const episodes::EpisodeSpec& spec,
                             const trainer::TrainConfig& cfg, std::size_t workers) {
    return episodes::run_protocol(data.base, data.novel, data.semantics ? &*data.semantics : nullptr, spec, cfg,
                                  workers);
}

int cmd_run(const DataFlags& d, TrainFlags& t, const std::string& out_path, std::ostream& out, std::ostream& err) {
    t.finalize();
    const LoadedData data = load_data(d, t.spec.beta);
    const auto report = run_once(data, t.spec, t.train, t.workers);
    const std::string payload = episodes::report_to_json(report).dump(2);
    if (!out_path.empty()) {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw DataError("cannot write " + out_path);
        f << payload << '\n';
    }
    if (t.pretty) {
        out << t.spec.n_way << "-way " << t.spec.k_shot << "-shot, " << report.per_episode_accuracy.size() << "/"
            << t.spec.episodes << " episodes: " << report.summary << '\n';
    } else {
        out << payload << '\n';
    }
    if (episodes::failure_rate_exceeded(report)) {
        err << "error: " << report.failures << " of " << report.episodes << " episodes diverged\n";
        return kEpisodeFailures;
    }
    return kOk;
}

struct GridRow {
    bool instance;
    bool channel;
    bool sc;
    bool mse;
    std::size_t beta;
};

int cmd_ablate(const DataFlags& d, TrainFlags& t, const std::vector<std::size_t>& k_shots, std::ostream& out,
               std::ostream& err) {
    t.finalize();
    const LoadedData data = load_data(d, t.spec.beta);
    const std::size_t beta = t.spec.beta;

    // Attention grid trains with CE only; its first row has no regularization
    // at all. Loss grid keeps both attentions.
    const std::vector<GridRow> attention_rows = {
        {false, false, false, false, 0}, {false, true, false, false, beta},
        {true, false, false, false, beta}, {true, true, false, false, beta}};
    const std::vector<GridRow> loss_rows = {
        {true, true, false, false, beta}, {true, true, false, true, beta},
        {true, true, true, false, beta}, {true, true, true, true, beta}};

    bool too_many_failures = false;
    auto run_grid = [&](const std::vector<GridRow>& rows) {
        json grid = json::array();
        for (const auto& row : rows) {
            json entry = {{"instance_attention", row.instance}, {"channel_attention", row.channel},
                          {"sc_loss", row.sc}, {"mse_loss", row.mse}, {"beta", row.beta}};
            for (std::size_t k : k_shots) {
                episodes::EpisodeSpec spec = t.spec;
                spec.k_shot = k;
                spec.beta = row.beta;
                trainer::TrainConfig cfg = t.train;
                cfg.ablation = {row.instance, row.channel, row.sc, row.mse};
                const auto report = run_once(data, spec, cfg, t.workers);
                too_many_failures = too_many_failures || episodes::failure_rate_exceeded(report);
                entry["results"][std::to_string(k)] = {{"mean", report.mean},
                                                       {"ci95", report.ci95},
                                                       {"failures", report.failures},
                                                       {"summary", report.summary}};
            }
            grid.push_back(entry);
        }
        return grid;
    };

    json result;
    episodes::EpisodeSpec echo_spec = t.spec;
    result["config"] = episodes::config_echo(echo_spec, t.train);
    result["config"].erase("k_shot");
    result["config"].erase("ablation");
    result["k_shots"] = k_shots;
    result["attention_grid"] = run_grid(attention_rows);
    result["loss_grid"] = run_grid(loss_rows);

    if (t.pretty) {
        auto mark = [](bool b) { return b ? "yes" : "no"; };
        auto print = [&](const json& grid, const char* a, const char* b, const char* ka, const char* kb) {
            out << "| " << a << " | " << b << " |";
            for (std::size_t k : k_shots) out << " K=" << k << " |";
            out << "\n|---|---|";
            for (std::size_t i = 0; i < k_shots.size(); ++i) out << "---|";
            out << '\n';
            for (const auto& row : grid) {
                out << "| " << mark(row[ka].get<bool>()) << " | " << mark(row[kb].get<bool>()) << " |";
                for (std::size_t k : k_shots) {
                    out << ' ' << row["results"][std::to_string(k)]["summary"].get<std::string>() << " |";
                }
                out << '\n';
            }
        };
        print(result["attention_grid"], "Ins.Att.", "Chanl.Att.", "instance_attention", "channel_attention");
        out << '\n';
        print(result["loss_grid"], "L_SC", "L_MSE", "sc_loss", "mse_loss");
    } else {
        out << result.dump(2) << '\n';
    }
    if (too_many_failures) {
        err << "error: at least one ablation row exceeded the episode failure limit\n";
        return kEpisodeFailures;
    }
    return kOk;
}

int cmd_gradcheck(trainer::GradcheckOptions& o, bool raw_dot, std::ostream& out, std::ostream& err) {
    o.loss.normalize_for_sc = !raw_dot;
    const auto report = trainer::run_gradcheck(o);
    json blocks = json::array();
    for (const auto& b : report.blocks) {
        blocks.push_back({{"block", b.name}, {"max_relative_error", b.max_relative_error}, {"passed", b.passed}});
    }
    out << json{{"dim", o.dim},
                {"beta", o.beta},
                {"n_way", o.n_way},
                {"k_shot", o.k_shot},
                {"trials", o.trials},
                {"seed", o.seed},
                {"tolerance", o.tolerance},
                {"blocks", blocks},
                {"passed", report.passed}}
               .dump(2)
        << '\n';
    if (!report.passed) {
        for (const auto& b : report.blocks) {
            if (!b.passed) {
                err << "gradcheck failed for block " << b.name << ": max relative error " << b.max_relative_error
                    << '\n';
            }
        }
        return kGradcheckFailed;
    }
    return kOk;
}

int cmd_synth(const episodes::SynthConfig& cfg, std::size_t novel_classes, std::uint64_t seed,
              const std::string& out_dir, std::ostream& out) {
    numerics::Rng rng(seed, 0);
    const auto data = episodes::synth_generate(cfg, rng);
    const auto bench = episodes::split_base_novel(data, novel_classes);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw DataError("cannot create " + out_dir + ": " + ec.message());
    const auto dir = std::filesystem::path(out_dir);
    episodes::save_feature_store(bench.base, dir / "base.afrf");
    episodes::save_feature_store(bench.novel, dir / "novel.afrf");
    semantics::save_semantic_table(bench.semantics, dir / "embeddings.json");
    out << json{{"base_features", (dir / "base.afrf").string()},
                {"novel_features", (dir / "novel.afrf").string()},
                {"embeddings", (dir / "embeddings.json").string()},
                {"base_classes", bench.base.class_count()},
                {"novel_classes", bench.novel.class_count()},
                {"per_class", cfg.per_class},
                {"feat_dim", cfg.feat_dim},
                {"sem_dim", cfg.sem_dim}}
               .dump(2)
        << '\n';
    return kOk;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
    const std::filesystem::path p(path);
    if (p.extension() == ".json") {
        const auto table = semantics::load_semantic_table(p);
        json names = json::array();
        for (const auto& [name, _] : table.entries) names.push_back(name);
        out << json{{"kind", "embeddings"}, {"dim", table.dim}, {"classes", names}}.dump(2) << '\n';
        return kOk;
    }
    const auto store = episodes::load_feature_store(p);
    json classes = json::object();
    for (const auto& name : store.class_names()) classes[name] = store.records_of(name).size();
    out << json{{"kind", "features"}, {"dim", store.dim()}, {"records", store.record_count()}, {"classes", classes}}
               .dump(2)
        << '\n';
    return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Attentive feature regularization for few-shot classification on pre-extracted features", "afr"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    DataFlags data;
    TrainFlags run_flags;
    run_flags.workers = default_workers();
    std::string out_path;
    auto* run = app.add_subcommand("run", "Run the N-way K-shot evaluation protocol");
    add_data_flags(run, data);
    add_train_flags(run, run_flags, true);
    run->add_option("--out", out_path, "Also write the report JSON to this path");

    TrainFlags ablate_flags;
    ablate_flags.workers = default_workers();
    std::vector<std::size_t> k_shots = {1, 5};
    auto* ablate = app.add_subcommand("ablate", "Attention and loss ablation grids with seed-paired episodes");
    add_data_flags(ablate, data);
    add_train_flags(ablate, ablate_flags, false);
    ablate->add_option("--k-shots", k_shots, "Shot counts to evaluate")->delimiter(',');

    trainer::GradcheckOptions grad;
    bool grad_raw_dot = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    gradcheck->add_option("--dim", grad.dim, "Feature dimension")->check(CLI::PositiveNumber);
    gradcheck->add_option("--beta", grad.beta, "Prototypes per class")->check(CLI::PositiveNumber);
    gradcheck->add_option("--n-way", grad.n_way, "Classes")->check(CLI::Range(2, 1000));
    gradcheck->add_option("--k-shot", grad.k_shot, "Support rows per class")->check(CLI::PositiveNumber);
    gradcheck->add_option("--reduction", grad.reduction, "Squeeze-excite reduction ratio");
    gradcheck->add_option("--trials", grad.trials, "Random configurations")->check(CLI::PositiveNumber);
    gradcheck->add_option("--seed", grad.seed, "First trial seed");
    gradcheck->add_option("--tau", grad.loss.tau, "Contrastive temperature");
    gradcheck->add_flag("--raw-dot", grad_raw_dot, "Use raw dot products in the contrastive loss");
    gradcheck->add_option("--perturb-block", grad.perturb_block, "Corrupt one block's analytic gradient")
        ->group("");

    episodes::SynthConfig synth_cfg;
    std::size_t novel_classes = 10;
    std::uint64_t synth_seed = 1;
    std::string out_dir;
    auto* synth = app.add_subcommand("synth", "Write a synthetic base/novel benchmark");
    synth->add_option("--classes", synth_cfg.classes, "Total classes")->check(CLI::Range(2, 1000000));
    synth->add_option("--novel-classes", novel_classes, "Classes placed in the novel store")
        ->check(CLI::PositiveNumber);
    synth->add_option("--per-class", synth_cfg.per_class, "Records per class")->check(CLI::PositiveNumber);
    synth->add_option("--feat-dim", synth_cfg.feat_dim, "Feature dimension")->check(CLI::PositiveNumber);
    synth->add_option("--sem-dim", synth_cfg.sem_dim, "Embedding dimension")->check(CLI::PositiveNumber);
    synth->add_option("--spread", synth_cfg.cluster_spread, "Norm of the class means");
    synth->add_option("--noise", synth_cfg.noise, "Per-coordinate noise standard deviation");
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--out-dir", out_dir, "Output directory")->required();

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "Summarize a feature store or embedding file");
    inspect->add_option("path", inspect_path, "AFRF, .csv or embedding .json file")->required();

    std::vector<const char*> argv{"afr"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) return cmd_run(data, run_flags, out_path, out, err);
        if (*ablate) return cmd_ablate(data, ablate_flags, k_shots, out, err);
        if (*gradcheck) return cmd_gradcheck(grad, grad_raw_dot, out, err);
        if (*synth) return cmd_synth(synth_cfg, novel_classes, synth_seed, out_dir, out);
        if (*inspect) return cmd_inspect(inspect_path, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const Error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const nlohmann::json::exception& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    }
    return kConfigError;
}

}  // namespace afr::cli
