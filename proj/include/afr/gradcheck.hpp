#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "afr/losses.hpp"

namespace afr::trainer {

struct GradcheckOptions {
    std::size_t dim = 8;
    std::size_t beta = 3;
    std::size_t n_way = 3;
    std::size_t k_shot = 2;
    std::size_t reduction = 4;
    std::uint64_t seed = 0;
    int trials = 10;
    double step = 1e-4;
    double tolerance = 1e-4;
    losses::LossConfig loss;
    // Test fixture: corrupts the analytic gradient of this block.
    std::string perturb_block;
};

struct BlockResult {
    std::string name;
    double max_relative_error = 0.0;
    bool passed = true;
};

struct GradcheckReport {
    std::vector<BlockResult> blocks;
    bool passed = true;
};

// Compares analytic and central-difference gradients of the full training
// loss on random miniature episodes (one per trial, seeds seed..seed+trials-1).
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace afr::trainer
