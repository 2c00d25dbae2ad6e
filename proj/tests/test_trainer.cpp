#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"

#include "afr/errors.hpp"
#include "afr/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace afr::trainer;
using afr::episodes::EpisodeSpec;
using afr::numerics::Matrix;
using afr::numerics::Rng;

namespace {

const afr::episodes::SyntheticBenchmark& bench() {
    static const auto b = afr::episodes::default_synthetic_benchmark(1);
    return b;
}

bool same_model(const TrainedModel& a, const TrainedModel& b) {
    if (!(a.classifier.weight == b.classifier.weight && a.classifier.bias == b.classifier.bias)) return false;
    auto pa = a.afr;
    auto pb = b.afr;
    const auto ba = afr::testing::blocks_of(pa);
    const auto bb = afr::testing::blocks_of(pb);
    for (std::size_t i = 0; i < ba.size(); ++i)
        if (!(*ba[i] == *bb[i])) return false;
    return a.loss_trace == b.loss_trace;
}

// Two well separated Gaussian clusters per axis: class c has mean 10 * e_c.
afr::episodes::Episode separable_episode(std::size_t n, std::size_t k, std::size_t d, Rng& rng) {
    afr::episodes::Episode ep;
    for (std::size_t c = 0; c < n; ++c) ep.class_names.push_back("c" + std::to_string(c));
    ep.support = Matrix(n * k, d);
    ep.query = Matrix(n * 3, d);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < d; ++j) ep.support(c * k + i, j) = (j == c ? 10.0 : 0.0) + rng.normal();
            ep.support_labels.push_back(c);
        }
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < d; ++j) ep.query(c * 3 + i, j) = (j == c ? 10.0 : 0.0) + rng.normal();
            ep.query_labels.push_back(c);
        }
    }
    return ep;
}

double support_accuracy(const TrainedModel& m, const afr::episodes::Episode& ep) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < ep.support.rows(); ++i) ok += predict(m, ep.support.row(i)).label == ep.support_labels[i];
    return static_cast<double>(ok) / static_cast<double>(ep.support.rows());
}

}  // namespace

TEST_CASE("defaults") {
    TrainConfig cfg;
    CHECK(cfg.epochs == 1000);
    CHECK(cfg.learning_rate == 0.001);
    CHECK(cfg.weight_decay == 0.0001);
    CHECK(cfg.reduction == 4);
    EpisodeSpec spec;
    CHECK(spec.n_way == 5);
    CHECK(spec.queries_per_class == 15);
    CHECK(spec.beta == 3);
    CHECK(spec.episodes == 600);
}

TEST_CASE("training is deterministic") {
    EpisodeSpec spec;
    const auto ep = afr::testing::bench_episode(bench(), spec, 3, 4);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.seed = 3;
    const auto a = train_episode(ep, cfg);
    const auto b = train_episode(ep, cfg);
    CHECK(same_model(a, b));
    CHECK(a.loss_trace.size() == 60);

    cfg.baseline = Baseline::mixup;
    CHECK(same_model(train_episode(ep, cfg), train_episode(ep, cfg)));
}

TEST_CASE("separable episodes reach perfect support accuracy") {
    Rng rng(8, 0);
    const auto ep = separable_episode(5, 5, 8, rng);
    // Without base prototypes there is no mean gap to measure.
    CHECK_THROWS_AS(train_episode(ep, TrainConfig{}), afr::ConfigError);
    TrainConfig plain;
    plain.ablation = {false, false, false, false};
    const auto model = train_episode(ep, plain);
    CHECK(support_accuracy(model, ep) == 1.0);
    CHECK(evaluate_episode(model, ep) == 1.0);

    // Full AFR pipeline on a widely spread synthetic benchmark.
    afr::numerics::Rng gen(9, 0);
    const auto data = afr::episodes::synth_generate(25, 30, 16, 8, 10.0, 1.0, gen);
    const auto wide = afr::episodes::split_base_novel(data, 8);
    EpisodeSpec spec;
    spec.k_shot = 5;
    const auto afr_ep = afr::testing::bench_episode(wide, spec, 0, 0);
    const auto afr_model = train_episode(afr_ep, TrainConfig{});
    CHECK(support_accuracy(afr_model, afr_ep) == 1.0);
}

TEST_CASE("ablating a loss equals zeroing its weight") {
    EpisodeSpec spec;
    spec.k_shot = 2;
    const auto ep = afr::testing::bench_episode(bench(), spec, 5, 1);
    TrainConfig base;
    base.epochs = 40;

    TrainConfig ablate_sc = base;
    ablate_sc.ablation.sc_loss = false;
    TrainConfig zero_sc = base;
    zero_sc.loss.mu1 = 0.0;
    CHECK(same_model(train_episode(ep, ablate_sc), train_episode(ep, zero_sc)));

    TrainConfig ablate_mse = base;
    ablate_mse.ablation.mse_loss = false;
    TrainConfig zero_mse = base;
    zero_mse.loss.mu2 = 0.0;
    CHECK(same_model(train_episode(ep, ablate_mse), train_episode(ep, zero_mse)));
}

TEST_CASE("final loss does not exceed the first") {
    for (std::size_t k : {1u, 5u}) {
        for (std::uint64_t e = 0; e < 4; ++e) {
            EpisodeSpec spec;
            spec.k_shot = k;
            const auto ep = afr::testing::bench_episode(bench(), spec, 11, e);
            TrainConfig cfg;
            cfg.epochs = 150;
            const auto model = train_episode(ep, cfg);
            CHECK(model.loss_trace.back().total <= model.loss_trace.front().total);
            for (const auto& l : model.loss_trace) CHECK(std::isfinite(l.total));
        }
    }
}

TEST_CASE("plain cross-entropy training matches the logistic-regression oracle") {
    EpisodeSpec spec;
    spec.beta = 0;
    spec.k_shot = 5;
    const auto ep = afr::testing::bench_episode(bench(), spec, 2, 7);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.ablation = {false, false, false, false};
    const auto model = train_episode(ep, cfg);

    afr::oracle::Rows x;
    for (std::size_t i = 0; i < ep.support.rows(); ++i) x.emplace_back(ep.support.row(i).begin(), ep.support.row(i).end());
    const auto oracle = afr::oracle::train_logistic(x, ep.support_labels, 5, 200, 0.001, 0.0001);
    REQUIRE(oracle.trace.size() == model.loss_trace.size());
    double worst = 0.0;
    for (std::size_t e = 0; e < oracle.trace.size(); ++e)
        worst = std::max(worst, std::abs(oracle.trace[e] - model.loss_trace[e].total));
    CHECK(worst <= 1e-9);
    CHECK(EpisodeObjective(ep, cfg).blocks().size() == 1);
}

TEST_CASE("divergence is reported with its epoch") {
    EpisodeSpec spec;
    const auto ep = afr::testing::bench_episode(bench(), spec, 1, 0);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.learning_rate = 1e306;
    try {
        train_episode(ep, cfg);
        FAIL("expected divergence");
    } catch (const afr::DivergenceError& e) {
        CHECK(e.epoch() >= 1);
        CHECK(e.epoch() < 10);
    }
}

TEST_CASE("predict examples") {
    TrainedModel m;
    m.classifier = afr::losses::Classifier{Matrix::identity(3), Matrix(1, 3)};
    for (std::size_t k = 0; k < 3; ++k) {
        std::vector<double> axis(3, 0.0);
        axis[k] = 1.0;
        CHECK(predict(m, axis).label == k);
    }
    m.classifier = afr::losses::Classifier::zeros(4, 3);
    CHECK(predict(m, std::vector<double>{1.0, 2.0, 3.0}).label == 0);

    m.classifier = afr::losses::Classifier{Matrix{{1, 0}, {0, 1}}, Matrix(1, 2)};
    const auto p = predict(m, std::vector<double>{0.2, 0.9});
    CHECK(p.label == 1);
    CHECK(p.logits == std::vector<double>{0.2, 0.9});
    CHECK_THROWS_AS(predict(m, std::vector<double>{1.0}), afr::ShapeError);
}

TEST_CASE("evaluate_episode counts correct queries") {
    afr::episodes::Episode ep;
    ep.class_names = {"a", "b", "c", "d", "e"};
    ep.query = Matrix(25, 5);
    for (std::size_t i = 0; i < 25; ++i) {
        ep.query(i, i / 5) = 1.0;
        ep.query_labels.push_back(i / 5);
    }
    TrainedModel m;
    m.classifier = afr::losses::Classifier{Matrix::identity(5), Matrix(1, 5)};
    CHECK(evaluate_episode(m, ep) == 1.0);
    m.classifier = afr::losses::Classifier{Matrix(5, 5), Matrix{{0, 0, 1, 0, 0}}};
    CHECK(evaluate_episode(m, ep) == doctest::Approx(0.2));

    afr::episodes::Episode two;
    two.class_names = {"x", "y"};
    two.query = Matrix(10, 1);
    for (std::size_t i = 0; i < 10; ++i) {
        const bool positive = i < 5;
        two.query(i, 0) = positive ? 1.0 : -1.0;
        two.query_labels.push_back(positive ? 0 : 1);
    }
    two.query_labels[9] = 0;  // wrong by construction
    m.classifier = afr::losses::Classifier{Matrix{{1.0}, {-1.0}}, Matrix(1, 2)};
    CHECK(evaluate_episode(m, two) == doctest::Approx(0.9));
}

TEST_CASE("inference ignores the attention parameters") {
    EpisodeSpec spec;
    const auto ep = afr::testing::bench_episode(bench(), spec, 4, 2);
    TrainConfig cfg;
    cfg.epochs = 30;
    auto model = train_episode(ep, cfg);
    std::vector<std::size_t> before;
    for (std::size_t i = 0; i < ep.query.rows(); ++i) before.push_back(predict(model, ep.query.row(i)).label);
    Rng rng(0, 0);
    for (Matrix* m : afr::testing::blocks_of(model.afr)) *m = afr::testing::random_matrix(m->rows(), m->cols(), rng, 100.0);
    for (std::size_t i = 0; i < ep.query.rows(); ++i) CHECK(predict(model, ep.query.row(i)).label == before[i]);
}

TEST_CASE("parameter blocks follow the enabled stages") {
    EpisodeSpec spec;
    const auto ep = afr::testing::bench_episode(bench(), spec, 1, 0);
    TrainConfig cfg;
    auto names = [&] {
        std::vector<std::string> out;
        const EpisodeObjective objective(ep, cfg);
        for (const auto& b : objective.blocks()) out.push_back(b.name);
        return out;
    };
    CHECK(names() == std::vector<std::string>{"W_q", "W_k", "W_v", "W_p", "FC1", "FC2", "classifier"});
    cfg.ablation.channel_attention = false;
    CHECK(names() == std::vector<std::string>{"W_q", "W_k", "W_v", "W_p", "classifier"});
    cfg.ablation.instance_attention = false;
    CHECK(names().size() == 1);
}
