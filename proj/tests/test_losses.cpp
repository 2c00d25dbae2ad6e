#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "afr/errors.hpp"
#include "afr/losses.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace afr::losses;
using afr::numerics::Matrix;
using afr::numerics::Rng;
using afr::testing::random_matrix;

namespace {

std::vector<RegularizedSet> random_sets(std::size_t n, std::size_t k, std::size_t beta, std::size_t d, Rng& rng) {
    std::vector<RegularizedSet> sets;
    for (std::size_t s = 0; s < n; ++s) sets.push_back({random_matrix(k, d, rng), random_matrix(beta, d, rng), s});
    return sets;
}

double oracle_sc(const std::vector<RegularizedSet>& sets, double tau, bool normalize) {
    std::vector<afr::oracle::Rows> classes;
    for (const auto& s : sets) {
        afr::oracle::Rows rows;
        const Matrix all = s.rows();
        for (std::size_t i = 0; i < all.rows(); ++i) rows.emplace_back(all.row(i).begin(), all.row(i).end());
        classes.push_back(rows);
    }
    return afr::oracle::supervised_contrastive(classes.data(), classes.size(), tau, normalize);
}

}  // namespace

TEST_CASE("supervised contrastive hand examples") {
    std::vector<RegularizedSet> same{{Matrix{{0.6, 0.8}}, Matrix{{0.6, 0.8}}, 0},
                                     {Matrix{{0.6, 0.8}}, Matrix{{0.6, 0.8}}, 1}};
    CHECK(supervised_contrastive(same, 0.1, true) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    std::vector<RegularizedSet> opposed{{Matrix{{1.0, 0.0}}, Matrix{{1.0, 0.0}}, 0},
                                        {Matrix{{-1.0, 0.0}}, Matrix{{-1.0, 0.0}}, 1}};
    CHECK(supervised_contrastive(opposed, 1.0, true) == doctest::Approx(std::log(2.0) - 2.0).epsilon(1e-12));
    CHECK(supervised_contrastive(opposed, 1.0, true, ScSign::paper) ==
          doctest::Approx(2.0 - std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(supervised_contrastive({same[0]}, 0.1, true), afr::ConfigError);
    std::vector<RegularizedSet> thin{{Matrix{{1.0, 0.0}}, Matrix(0, 2), 0}, same[1]};
    CHECK_THROWS_AS(supervised_contrastive(thin, 0.1, true), afr::ConfigError);
    CHECK_THROWS_AS(supervised_contrastive(same, 0.0, true), afr::ConfigError);
}

TEST_CASE("supervised contrastive agrees with the brute-force oracle") {
    Rng rng(21, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(4);
        const std::size_t k = 1 + rng.uniform_index(3);
        const std::size_t beta = 1 + rng.uniform_index(3);
        const std::size_t d = 1 + rng.uniform_index(8);
        const auto sets = random_sets(n, k, beta, d, rng);
        const double tau = rng.uniform(0.05, 2.0);
        for (bool normalize : {true, false}) {
            const double got = supervised_contrastive(sets, tau, normalize);
            const double want = oracle_sc(sets, tau, normalize);
            CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));
        }
    }
}

TEST_CASE("supervised contrastive is invariant to class and row permutations") {
    Rng rng(22, 0);
    for (int trial = 0; trial < 30; ++trial) {
        auto sets = random_sets(4, 2, 3, 6, rng);
        const double base = supervised_contrastive(sets, 0.1, true);
        std::reverse(sets.begin(), sets.end());
        CHECK(std::abs(supervised_contrastive(sets, 0.1, true) - base) < 1e-9);
        for (auto& s : sets) {
            Matrix swapped = s.fused;
            std::swap_ranges(swapped.row(0).begin(), swapped.row(0).end(), swapped.row(2).begin());
            s.fused = swapped;
        }
        CHECK(std::abs(supervised_contrastive(sets, 0.1, true) - base) < 1e-9);
    }
}

TEST_CASE("mean gap examples") {
    std::vector<RegularizedSet> one{{Matrix{{1.0}}, Matrix{{3.0}}, 0}};
    CHECK(mean_gap_mse(one) == 4.0);
    CHECK(mean_gap_mse(one, MseNorm::l2) == 2.0);

    std::vector<RegularizedSet> equal{{Matrix{{1.0, 2.0}, {3.0, 0.0}}, Matrix{{2.0, 1.0}}, 0}};
    CHECK(mean_gap_mse(equal) == 0.0);

    Rng rng(23, 0);
    for (int trial = 0; trial < 50; ++trial) {
        auto sets = random_sets(3, 2, 2, 5, rng);
        const double base = mean_gap_mse(sets);
        CHECK(base > 0.0);
        // Doubling every gap: scale both sides about the origin.
        for (auto& s : sets) {
            s.support = afr::numerics::scale(s.support, 2.0);
            s.fused = afr::numerics::scale(s.fused, 2.0);
        }
        CHECK(std::abs(mean_gap_mse(sets) - 4.0 * base) < 1e-12 * std::max(1.0, base));
    }
    CHECK_THROWS_AS(mean_gap_mse({}), afr::ConfigError);
    std::vector<RegularizedSet> empty{{Matrix{{1.0}}, Matrix(0, 1), 0}};
    CHECK_THROWS_AS(mean_gap_mse(empty), afr::ConfigError);
}

TEST_CASE("cross entropy examples") {
    Rng rng(24, 0);
    const auto sets = random_sets(5, 2, 3, 4, rng);
    CHECK(cross_entropy(sets, Classifier::zeros(5, 4)) == doctest::Approx(std::log(5.0)).epsilon(1e-14));

    Classifier clf{Matrix{{0.0}, {0.0}}, Matrix{{1.0, 0.0}}};
    std::vector<RegularizedSet> single{{Matrix{{2.5}}, Matrix(0, 1), 0}, {Matrix(0, 1), Matrix(0, 1), 1}};
    const double want = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    CHECK(cross_entropy(single, clf) == doctest::Approx(want).epsilon(1e-12));
    CHECK(want == doctest::Approx(0.3133).epsilon(1e-4));

    clf.bias(0, 0) = 2.0;
    CHECK(cross_entropy(single, clf) < want);

    std::vector<RegularizedSet> bad{{Matrix{{1.0}}, Matrix(0, 1), 7}};
    CHECK_THROWS_AS(cross_entropy(bad, Classifier::zeros(2, 1)), afr::DataError);

    // Soft targets: a one-hot row reproduces the hard-label loss, a mixed
    // target is the same mixture of the two hard losses.
    Classifier c2{Matrix{{0.3, -0.2}, {0.1, 0.4}}, Matrix{{0.05, -0.1}}};
    const Matrix x{{1.0, 2.0}};
    const double l0 = soft_cross_entropy(x, Matrix{{1.0, 0.0}}, c2);
    const double l1 = soft_cross_entropy(x, Matrix{{0.0, 1.0}}, c2);
    CHECK(soft_cross_entropy(x, Matrix{{0.3, 0.7}}, c2) == doctest::Approx(0.3 * l0 + 0.7 * l1).epsilon(1e-12));
    afr::oracle::Rows ox{{1.0, 2.0}};
    CHECK(l1 == doctest::Approx(afr::oracle::softmax_nll(ox, {1}, {{0.3, -0.2}, {0.1, 0.4}}, {0.05, -0.1}))
                    .epsilon(1e-12));
}

TEST_CASE("total loss arithmetic") {
    Rng rng(25, 0);
    const auto sets = random_sets(3, 2, 2, 8, rng);
    Classifier clf{random_matrix(3, 8, rng), random_matrix(1, 3, rng)};
    LossConfig cfg;
    CHECK(cfg.mu1 == 5.0);
    CHECK(cfg.mu2 == 20.0);
    CHECK(cfg.tau == 0.1);

    const auto full = total_loss(sets, clf, cfg);
    CHECK(std::abs(full.total - (full.ce + 5.0 * full.sc + 20.0 * full.mse)) < 1e-9);

    LossConfig off = cfg;
    off.mu1 = off.mu2 = 0.0;
    const auto plain = total_loss(sets, clf, off);
    CHECK(plain.total == plain.ce);

    LossConfig doubled = cfg;
    doubled.mu1 = 2.0 * cfg.mu1;
    const auto twice = total_loss(sets, clf, doubled);
    CHECK(std::abs((twice.total - full.total) - cfg.mu1 * full.sc) < 1e-9);

    CHECK(1.0 + 5.0 * 0.2 + 20.0 * 0.05 == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("total loss gradients match finite differences") {
    for (bool normalize : {true, false}) {
        for (int trial = 0; trial < 10; ++trial) {
            Rng rng(300 + trial, normalize ? 1 : 0);
            auto sets = random_sets(3, 2, 2, 8, rng);
            Classifier clf{random_matrix(3, 8, rng, 0.5), random_matrix(1, 3, rng, 0.5)};
            LossConfig cfg;
            cfg.normalize_for_sc = normalize;
            cfg.tau = normalize ? 0.1 : 2.0;

            LossGradients grads;
            const double value = total_loss(sets, clf, cfg, &grads).total;
            auto objective = [&] { return total_loss(sets, clf, cfg).total; };
            CHECK(objective() == value);

            INFO("normalize=" << normalize << " trial=" << trial);
            for (std::size_t s = 0; s < sets.size(); ++s) {
                auto num = afr::testing::numeric_gradient(&sets[s].support, objective);
                CHECK(afr::numerics::max_relative_error(afr::testing::flatten(grads.sets[s].support), num) < 1e-4);
                num = afr::testing::numeric_gradient(&sets[s].fused, objective);
                CHECK(afr::numerics::max_relative_error(afr::testing::flatten(grads.sets[s].fused), num) < 1e-4);
            }
            auto num = afr::testing::numeric_gradient(&clf.weight, objective);
            CHECK(afr::numerics::max_relative_error(afr::testing::flatten(grads.classifier.weight), num) < 1e-4);
            num = afr::testing::numeric_gradient(&clf.bias, objective);
            CHECK(afr::numerics::max_relative_error(afr::testing::flatten(grads.classifier.bias), num) < 1e-4);
        }
    }
}
