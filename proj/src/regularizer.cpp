#include "afr/regularizer.hpp"

#include <cmath>

#include "afr/errors.hpp"

namespace afr::regularizer {

using namespace numerics;

namespace {

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(std::string(what) + " must be " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

void accumulate(Matrix& into, const Matrix& delta) {
    if (into.empty()) {
        into = delta;
        return;
    }
    auto a = into.values();
    auto b = delta.values();
    if (a.size() != b.size()) throw ShapeError("gradient accumulation shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

Matrix glorot_matrix(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix m(fan_in, fan_out);
    for (double& v : m.values()) v = rng.uniform(-limit, limit);
    return m;
}

}  // namespace

PrototypeSet PrototypeSet::subset(const std::vector<std::string>& names) const {
    PrototypeSet out;
    out.class_names = names;
    out.vectors = Matrix(names.size(), vectors.cols());
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::size_t found = class_names.size();
        for (std::size_t j = 0; j < class_names.size(); ++j) {
            if (class_names[j] == names[i]) {
                found = j;
                break;
            }
        }
        if (found == class_names.size()) throw LookupError("no prototype for class '" + names[i] + "'");
        auto src = vectors.row(found);
        std::copy(src.begin(), src.end(), out.vectors.row(i).begin());
    }
    return out;
}

PrototypeSet compute_prototypes(const episodes::FeatureStore& store, const std::vector<std::string>& classes) {
    PrototypeSet out;
    out.class_names = classes;
    out.vectors = Matrix(classes.size(), store.dim());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (!store.has_class(classes[i])) throw DataError("class '" + classes[i] + "' has no base features");
        const auto& records = store.records_of(classes[i]);
        auto row = out.vectors.row(i);
        for (std::size_t r : records) {
            auto f = store.feature(r);
            for (std::size_t j = 0; j < row.size(); ++j) row[j] += static_cast<double>(f[j]);
        }
        for (double& v : row) v /= static_cast<double>(records.size());
    }
    return out;
}

InstanceAttentionParams InstanceAttentionParams::zeros(std::size_t dim) {
    return {Matrix(dim, dim), Matrix(dim, dim), Matrix(dim, dim), Matrix(dim, dim)};
}

ChannelAttentionParams ChannelAttentionParams::zeros(std::size_t dim, std::size_t reduction) {
    if (reduction < 2 || dim % reduction != 0) {
        throw ConfigError("reduction " + std::to_string(reduction) + " must be >= 2 and divide dim " +
                          std::to_string(dim));
    }
    const std::size_t hidden = dim / reduction;
    return {Matrix(dim, hidden), Matrix(1, hidden), Matrix(hidden, dim), Matrix(1, dim), reduction};
}

AfrParams AfrParams::zeros(std::size_t dim, std::size_t reduction) {
    return {InstanceAttentionParams::zeros(dim), ChannelAttentionParams::zeros(dim, reduction)};
}

InstanceAttentionParams InstanceAttentionParams::glorot(std::size_t dim, Rng& rng) {
    InstanceAttentionParams p;
    p.w_q = glorot_matrix(dim, dim, rng);
    p.w_k = glorot_matrix(dim, dim, rng);
    p.w_v = glorot_matrix(dim, dim, rng);
    p.w_p = glorot_matrix(dim, dim, rng);
    return p;
}

ChannelAttentionParams ChannelAttentionParams::glorot(std::size_t dim, std::size_t reduction, Rng& rng) {
    ChannelAttentionParams p = zeros(dim, reduction);
    p.w_fc1 = glorot_matrix(dim, dim / reduction, rng);
    p.w_fc2 = glorot_matrix(dim / reduction, dim, rng);
    return p;
}

AfrParams AfrParams::glorot(std::size_t dim, std::size_t reduction, Rng& rng) {
    AfrParams p;
    p.instance = InstanceAttentionParams::glorot(dim, rng);
    p.channel = ChannelAttentionParams::glorot(dim, reduction, rng);
    return p;
}

InstanceAttentionTrace instance_attention_forward(const Matrix& query, const Matrix& prototypes,
                                                  const InstanceAttentionParams& params) {
    const std::size_t d = prototypes.cols();
    if (prototypes.rows() == 0) throw ShapeError("instance_attention: no prototypes");
    require_shape(query, 1, d, "instance_attention query");
    require_shape(params.w_q, d, d, "W_q");
    require_shape(params.w_k, d, d, "W_k");
    require_shape(params.w_v, d, d, "W_v");
    require_shape(params.w_p, d, d, "W_p");

    InstanceAttentionTrace t;
    t.query = query;
    t.q = matmul(query, params.w_q);
    t.k = matmul(prototypes, params.w_k);
    t.v = matmul(prototypes, params.w_v);
    t.weights = softmax_rows(scale(matmul_nt(t.q, t.k), 1.0 / std::sqrt(static_cast<double>(d))));
    t.amplitude = matmul(t.weights, t.v);
    t.pre_relu = matmul(t.amplitude, params.w_p);
    t.p_hat = add_row_broadcast(prototypes, relu(t.pre_relu));
    return t;
}

ChannelAttentionTrace channel_attention_forward(const Matrix& p_hat, const Matrix& p_raw,
                                                const ChannelAttentionParams& params) {
    if (p_hat.rows() != p_raw.rows() || p_hat.cols() != p_raw.cols()) {
        throw ShapeError("channel_attention: P_hat and P differ in shape");
    }
    const std::size_t d = p_hat.cols();
    if (params.reduction == 0 || d % params.reduction != 0) {
        throw ShapeError("channel_attention: dim " + std::to_string(d) + " not divisible by reduction");
    }
    const std::size_t hidden = d / params.reduction;
    require_shape(params.w_fc1, d, hidden, "FC1 weight");
    require_shape(params.b_fc1, 1, hidden, "FC1 bias");
    require_shape(params.w_fc2, hidden, d, "FC2 weight");
    require_shape(params.b_fc2, 1, d, "FC2 bias");

    ChannelAttentionTrace t;
    t.z1 = add_row_broadcast(matmul(p_hat, params.w_fc1), params.b_fc1);
    t.h1 = relu(t.z1);
    t.gate = sigmoid(add_row_broadcast(matmul(t.h1, params.w_fc2), params.b_fc2));
    t.p_bar = add(hadamard(t.gate, p_hat), p_raw);
    return t;
}

Matrix instance_attention(const Matrix& query, const PrototypeSet& prototypes, const InstanceAttentionParams& params) {
    return instance_attention_forward(query, prototypes.vectors, params).p_hat;
}

Matrix channel_attention(const Matrix& p_hat, const Matrix& p_raw, const ChannelAttentionParams& params) {
    return channel_attention_forward(p_hat, p_raw, params).p_bar;
}

AfrTrace afr_forward(const Matrix& query, const Matrix& prototypes, const AfrParams& params,
                     const AfrSwitches& switches) {
    AfrTrace t;
    t.prototypes = prototypes;
    if (switches.instance_attention) {
        t.instance = instance_attention_forward(query, prototypes, params.instance);
        t.p_hat = t.instance->p_hat;
    } else {
        t.p_hat = prototypes;
    }
    if (switches.channel_attention) {
        t.channel = channel_attention_forward(t.p_hat, prototypes, params.channel);
        t.p_bar = t.channel->p_bar;
    } else {
        t.p_bar = t.p_hat;
    }
    return t;
}

void afr_backward(const AfrTrace& trace, const Matrix& d_p_bar, const AfrParams& params,
                  const AfrSwitches& switches, AfrParams& grads) {
    if (d_p_bar.rows() != trace.p_bar.rows() || d_p_bar.cols() != trace.p_bar.cols()) {
        throw ShapeError("afr_backward: gradient shape does not match P_bar");
    }

    Matrix d_p_hat;
    if (switches.channel_attention) {
        const auto& ch = *trace.channel;
        const auto& cp = params.channel;
        // P_bar = E * P_hat + P
        Matrix d_gate = hadamard(d_p_bar, trace.p_hat);
        d_p_hat = hadamard(d_p_bar, ch.gate);
        Matrix d_z2 = d_gate;
        {
            auto dz = d_z2.values();
            auto g = ch.gate.values();
            for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= g[i] * (1.0 - g[i]);
        }
        accumulate(grads.channel.w_fc2, matmul_tn(ch.h1, d_z2));
        accumulate(grads.channel.b_fc2, column_sums(d_z2));
        Matrix d_z1 = matmul_nt(d_z2, cp.w_fc2);
        {
            auto dz = d_z1.values();
            auto z = ch.z1.values();
            for (std::size_t i = 0; i < dz.size(); ++i) {
                if (z[i] <= 0.0) dz[i] = 0.0;
            }
        }
        accumulate(grads.channel.w_fc1, matmul_tn(trace.p_hat, d_z1));
        accumulate(grads.channel.b_fc1, column_sums(d_z1));
        d_p_hat = add(d_p_hat, matmul_nt(d_z1, cp.w_fc1));
    } else {
        d_p_hat = d_p_bar;
    }

    if (!switches.instance_attention) return;

    const auto& in = *trace.instance;
    const auto& ip = params.instance;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(trace.prototypes.cols()));

    // P_hat = P + 1 relu(u), u = A W_p
    Matrix d_u = column_sums(d_p_hat);
    {
        auto du = d_u.values();
        auto u = in.pre_relu.values();
        for (std::size_t i = 0; i < du.size(); ++i) {
            if (u[i] <= 0.0) du[i] = 0.0;
        }
    }
    accumulate(grads.instance.w_p, matmul_tn(in.amplitude, d_u));
    Matrix d_amp = matmul_nt(d_u, ip.w_p);

    // A = w V
    Matrix d_w = matmul_nt(d_amp, in.v);  // 1 x beta
    Matrix d_v = matmul_tn(in.weights, d_amp);

    // w = softmax(z): dz = w * (dw - <w, dw>)
    const double inner = dot(in.weights.values(), d_w.values());
    Matrix d_logits(1, d_w.cols());
    for (std::size_t j = 0; j < d_w.cols(); ++j) {
        d_logits(0, j) = in.weights(0, j) * (d_w(0, j) - inner) * inv_sqrt_d;
    }
    Matrix d_q = matmul(d_logits, in.k);      // 1 x d
    Matrix d_k = matmul_tn(d_logits, in.q);   // beta x d

    accumulate(grads.instance.w_q, matmul_tn(in.query, d_q));
    accumulate(grads.instance.w_k, matmul_tn(trace.prototypes, d_k));
    accumulate(grads.instance.w_v, matmul_tn(trace.prototypes, d_v));
}

Matrix support_query(const Matrix& support) {
    if (support.rows() == 0) throw ShapeError("support set is empty");
    return column_means(support);
}

RegularizedSet regularize_support(const Matrix& support, std::size_t label, const episodes::FeatureStore& base_store,
                                  const semantics::SelectionResult& selection, const InstanceAttentionParams& ip,
                                  const ChannelAttentionParams& cp) {
    if (selection.ranked.empty()) throw ConfigError("selection must contain at least one base class");
    const PrototypeSet protos = compute_prototypes(base_store, selection.class_names());
    const AfrParams params{ip, cp};
    const AfrTrace trace = afr_forward(support_query(support), protos.vectors, params);
    return {support, trace.p_bar, label};
}

}  // namespace afr::regularizer
