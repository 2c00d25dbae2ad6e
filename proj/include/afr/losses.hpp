#pragma once

#include <cstddef>
#include <vector>

#include "afr/numerics.hpp"
#include "afr/regularizer.hpp"

namespace afr::losses {

using numerics::Matrix;
using regularizer::RegularizedSet;

// standard: -log of the positive/negative ratio (what minimisation needs).
// paper: the same expression without the leading minus sign.
enum class ScSign { standard, paper };

// squared_mean: ||gap||^2 / d.  l2: ||gap||.
enum class MseNorm { squared_mean, l2 };

struct LossConfig {
    double mu1 = 5.0;
    double mu2 = 20.0;
    double tau = 0.1;
    bool normalize_for_sc = true;
    ScSign sc_sign = ScSign::standard;
    MseNorm mse_norm = MseNorm::squared_mean;
};

struct LossBreakdown {
    double ce = 0.0;
    double sc = 0.0;
    double mse = 0.0;
    double total = 0.0;

    friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

// Single affine layer d -> N.
struct Classifier {
    Matrix weight;  // N x d
    Matrix bias;    // 1 x N

    static Classifier zeros(std::size_t classes, std::size_t dim);
    std::size_t classes() const { return weight.rows(); }
    std::size_t dim() const { return weight.cols(); }
    Matrix logits(const Matrix& rows) const;
};

// Gradient buffers shaped like the sets they belong to.
struct SetGradients {
    Matrix support;
    Matrix fused;
};

std::vector<SetGradients> zero_gradients(const std::vector<RegularizedSet>& sets);

// Extra rows that only enter the cross-entropy term, with soft targets
// (rows of `targets` sum to one). Used by the mixup baseline.
struct SoftTargetRows {
    Matrix features;  // M x d
    Matrix targets;   // M x N
};

// Each loss returns its value and, when grads is non-null, adds
// grad_scale * d(loss)/d(input) into the buffers.
double supervised_contrastive(const std::vector<RegularizedSet>& sets, double tau, bool normalize,
                              ScSign sign = ScSign::standard, std::vector<SetGradients>* grads = nullptr,
                              double grad_scale = 1.0);

double mean_gap_mse(const std::vector<RegularizedSet>& sets, MseNorm norm = MseNorm::squared_mean,
                    std::vector<SetGradients>* grads = nullptr, double grad_scale = 1.0);

double cross_entropy(const std::vector<RegularizedSet>& sets, const Classifier& classifier,
                     std::vector<SetGradients>* grads = nullptr, Classifier* classifier_grad = nullptr,
                     const SoftTargetRows* extra = nullptr, Matrix* extra_grad = nullptr, double grad_scale = 1.0);

// Mean over rows of -sum_c t_c log softmax(W x + b)_c.
double soft_cross_entropy(const Matrix& rows, const Matrix& targets, const Classifier& classifier,
                          Matrix* rows_grad = nullptr, Classifier* classifier_grad = nullptr, double grad_scale = 1.0);

struct LossGradients {
    std::vector<SetGradients> sets;
    Classifier classifier;
    Matrix extra;
};

// total = ce + mu1 * sc + mu2 * mse. A term whose weight is zero is still
// reported when its inputs allow it but never contributes gradient.
LossBreakdown total_loss(const std::vector<RegularizedSet>& sets, const Classifier& classifier, const LossConfig& cfg,
                         LossGradients* grads = nullptr, const SoftTargetRows* extra = nullptr);

}  // namespace afr::losses
