#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "afr/feature_store.hpp"
#include "afr/numerics.hpp"
#include "afr/semantics.hpp"

namespace afr::regularizer {

using numerics::Matrix;

// Row i is the mean of every base feature of class_names[i].
struct PrototypeSet {
    std::vector<std::string> class_names;
    Matrix vectors;

    // Rows for the requested classes, in the requested order.
    PrototypeSet subset(const std::vector<std::string>& names) const;
};

PrototypeSet compute_prototypes(const episodes::FeatureStore& store, const std::vector<std::string>& classes);

struct InstanceAttentionParams {
    Matrix w_q;
    Matrix w_k;
    Matrix w_v;
    Matrix w_p;

    static InstanceAttentionParams zeros(std::size_t dim);
    static InstanceAttentionParams glorot(std::size_t dim, numerics::Rng& rng);
};

// Squeeze-excite gate: d -> d/r -> d.
struct ChannelAttentionParams {
    Matrix w_fc1;  // d x d/r
    Matrix b_fc1;  // 1 x d/r
    Matrix w_fc2;  // d/r x d
    Matrix b_fc2;  // 1 x d
    std::size_t reduction = 4;

    static ChannelAttentionParams zeros(std::size_t dim, std::size_t reduction);
    // Glorot-uniform weights, zero biases.
    static ChannelAttentionParams glorot(std::size_t dim, std::size_t reduction, numerics::Rng& rng);
};

inline constexpr std::size_t kDefaultReduction = 4;

struct AfrParams {
    InstanceAttentionParams instance;
    ChannelAttentionParams channel;

    static AfrParams zeros(std::size_t dim, std::size_t reduction);
    static AfrParams glorot(std::size_t dim, std::size_t reduction, numerics::Rng& rng);
};

// Which attention stages run. A disabled stage is the identity:
// instance off gives P_hat = P, channel off gives P_bar = P_hat.
struct AfrSwitches {
    bool instance_attention = true;
    bool channel_attention = true;
};

struct InstanceAttentionTrace {
    Matrix query;      // 1 x d, the support feature f_s
    Matrix q;          // 1 x d
    Matrix k;          // beta x d
    Matrix v;          // beta x d
    Matrix weights;    // 1 x beta, softmax(q k^T / sqrt(d))
    Matrix amplitude;  // 1 x d, A_s
    Matrix pre_relu;   // 1 x d, A_s W_p
    Matrix p_hat;      // beta x d
};

struct ChannelAttentionTrace {
    Matrix z1;    // beta x d/r
    Matrix h1;    // relu(z1)
    Matrix gate;  // beta x d, E_s
    Matrix p_bar;
};

InstanceAttentionTrace instance_attention_forward(const Matrix& query, const Matrix& prototypes,
                                                  const InstanceAttentionParams& params);
ChannelAttentionTrace channel_attention_forward(const Matrix& p_hat, const Matrix& p_raw,
                                                const ChannelAttentionParams& params);

// Calibrated prototypes P_hat = P + relu(A_s W_p), the row added to every prototype.
Matrix instance_attention(const Matrix& query, const PrototypeSet& prototypes, const InstanceAttentionParams& params);
// Fused prototypes P_bar = E_s * P_hat + P.
Matrix channel_attention(const Matrix& p_hat, const Matrix& p_raw, const ChannelAttentionParams& params);

struct AfrTrace {
    Matrix prototypes;
    Matrix p_hat;
    Matrix p_bar;
    std::optional<InstanceAttentionTrace> instance;
    std::optional<ChannelAttentionTrace> channel;
};

AfrTrace afr_forward(const Matrix& query, const Matrix& prototypes, const AfrParams& params,
                     const AfrSwitches& switches = {});

// Accumulates d(loss)/d(params) into grads given d(loss)/d(P_bar).
// Gradients are only written for enabled stages.
void afr_backward(const AfrTrace& trace, const Matrix& d_p_bar, const AfrParams& params,
                  const AfrSwitches& switches, AfrParams& grads);

// H_s for one class: the support rows followed by the fused prototypes.
struct RegularizedSet {
    Matrix support;  // K x d
    Matrix fused;    // beta x d, may be empty for the plain baseline
    std::size_t label = 0;

    std::size_t size() const { return support.rows() + fused.rows(); }
    Matrix rows() const { return numerics::vstack(support, fused); }
};

// The attention query for a K-shot class is the mean of its support rows.
Matrix support_query(const Matrix& support);

RegularizedSet regularize_support(const Matrix& support, std::size_t label, const episodes::FeatureStore& base_store,
                                  const semantics::SelectionResult& selection, const InstanceAttentionParams& ip,
                                  const ChannelAttentionParams& cp);

}  // namespace afr::regularizer
