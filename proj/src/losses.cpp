#include "afr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "afr/errors.hpp"

namespace afr::losses {

using namespace numerics;

namespace {

struct RowRef {
    std::size_t set;
    bool fused;
    std::size_t index;
};

std::span<const double> row_of(const std::vector<RegularizedSet>& sets, const RowRef& r) {
    const auto& s = sets[r.set];
    return r.fused ? s.fused.row(r.index) : s.support.row(r.index);
}

std::span<double> grad_row(std::vector<SetGradients>& grads, const RowRef& r) {
    auto& g = grads[r.set];
    return r.fused ? g.fused.row(r.index) : g.support.row(r.index);
}

std::vector<RowRef> flatten_rows(const std::vector<RegularizedSet>& sets) {
    std::vector<RowRef> refs;
    for (std::size_t s = 0; s < sets.size(); ++s) {
        for (std::size_t i = 0; i < sets[s].support.rows(); ++i) refs.push_back({s, false, i});
        for (std::size_t i = 0; i < sets[s].fused.rows(); ++i) refs.push_back({s, true, i});
    }
    return refs;
}

std::size_t common_dim(const std::vector<RegularizedSet>& sets) {
    std::size_t d = 0;
    for (const auto& s : sets) {
        for (const Matrix* m : {&s.support, &s.fused}) {
            if (m->rows() == 0) continue;
            if (d == 0) d = m->cols();
            if (m->cols() != d) throw ShapeError("regularized sets disagree on feature dimension");
        }
    }
    return d;
}

double log_sum_exp(std::span<const double> xs) {
    const double mx = *std::max_element(xs.begin(), xs.end());
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
}

}  // namespace

Classifier Classifier::zeros(std::size_t classes, std::size_t dim) {
    return {Matrix(classes, dim), Matrix(1, classes)};
}

Matrix Classifier::logits(const Matrix& rows) const {
    if (rows.cols() != dim()) {
        throw ShapeError("classifier expects dim " + std::to_string(dim()) + ", got " + std::to_string(rows.cols()));
    }
    return add_row_broadcast(matmul_nt(rows, weight), bias);
}

std::vector<SetGradients> zero_gradients(const std::vector<RegularizedSet>& sets) {
    std::vector<SetGradients> out;
    out.reserve(sets.size());
    for (const auto& s : sets) {
        out.push_back({Matrix(s.support.rows(), s.support.cols()), Matrix(s.fused.rows(), s.fused.cols())});
    }
    return out;
}

double supervised_contrastive(const std::vector<RegularizedSet>& sets, double tau, bool normalize, ScSign sign,
                              std::vector<SetGradients>* grads, double grad_scale) {
    if (sets.size() < 2) throw ConfigError("supervised contrastive loss needs at least two classes");
    if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
    for (const auto& s : sets) {
        if (s.size() < 2) throw ConfigError("supervised contrastive loss needs at least two rows per class");
    }
    const std::size_t d = common_dim(sets);
    const auto refs = flatten_rows(sets);
    const std::size_t m = refs.size();

    // Rows used in the inner products, optionally L2-normalised.
    Matrix y(m, d);
    std::vector<double> norms(m, 1.0);
    for (std::size_t i = 0; i < m; ++i) {
        auto src = row_of(sets, refs[i]);
        auto dst = y.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
        if (normalize) {
            norms[i] = l2_norm(src);
            if (norms[i] == 0.0) throw NumericError("cannot normalise a zero feature row");
            for (double& v : dst) v /= norms[i];
        }
    }
    const Matrix sim = matmul_nt(y, y);
    const double sign_factor = sign == ScSign::standard ? 1.0 : -1.0;
    const double n_sets = static_cast<double>(sets.size());

    Matrix d_sim(m, m);
    double loss = 0.0;
    std::vector<double> neg_logits;
    std::vector<std::size_t> neg_index;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t cls = refs[i].set;
        const double n_h = static_cast<double>(sets[cls].size());
        const double coef = sign_factor / (n_sets * n_h * (n_h - 1.0));

        neg_logits.clear();
        neg_index.clear();
        for (std::size_t p = 0; p < m; ++p) {
            if (refs[p].set == cls) continue;
            neg_logits.push_back(sim(i, p) / tau);
            neg_index.push_back(p);
        }
        const double lse = log_sum_exp(neg_logits);

        double anchor = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i || refs[j].set != cls) continue;
            anchor += lse - sim(i, j) / tau;
            d_sim(i, j) -= coef / tau;
        }
        loss += coef * anchor;

        const double positives = n_h - 1.0;
        for (std::size_t k = 0; k < neg_index.size(); ++k) {
            d_sim(i, neg_index[k]) += coef * positives * std::exp(neg_logits[k] - lse) / tau;
        }
    }

    if (grads != nullptr) {
        // sim = y y^T, so dy = (dS + dS^T) y
        Matrix d_y(m, d);
        for (std::size_t i = 0; i < m; ++i) {
            auto out = d_y.row(i);
            for (std::size_t j = 0; j < m; ++j) {
                const double g = d_sim(i, j) + d_sim(j, i);
                if (g == 0.0) continue;
                auto yj = y.row(j);
                for (std::size_t c = 0; c < d; ++c) out[c] += g * yj[c];
            }
        }
        for (std::size_t i = 0; i < m; ++i) {
            auto dy = d_y.row(i);
            auto dst = grad_row(*grads, refs[i]);
            if (normalize) {
                auto yi = y.row(i);
                const double proj = dot(yi, dy);
                for (std::size_t c = 0; c < d; ++c) dst[c] += grad_scale * (dy[c] - yi[c] * proj) / norms[i];
            } else {
                for (std::size_t c = 0; c < d; ++c) dst[c] += grad_scale * dy[c];
            }
        }
    }
    return loss;
}

double mean_gap_mse(const std::vector<RegularizedSet>& sets, MseNorm norm, std::vector<SetGradients>* grads,
                    double grad_scale) {
    if (sets.empty()) throw ConfigError("mean gap loss needs at least one class");
    const double n_sets = static_cast<double>(sets.size());
    double loss = 0.0;
    for (std::size_t s = 0; s < sets.size(); ++s) {
        const auto& set = sets[s];
        if (set.support.rows() == 0 || set.fused.rows() == 0) {
            throw ConfigError("mean gap loss needs support rows and fused prototypes in every class");
        }
        const Matrix gap = subtract(column_means(set.support), column_means(set.fused));
        const double d = static_cast<double>(gap.cols());
        const double sq = dot(gap.values(), gap.values());
        Matrix d_gap = gap;
        if (norm == MseNorm::squared_mean) {
            loss += sq / d;
            for (double& v : d_gap.values()) v *= 2.0 / d;
        } else {
            const double len = std::sqrt(sq);
            loss += len;
            for (double& v : d_gap.values()) v = len > 0.0 ? v / len : 0.0;
        }
        if (grads != nullptr) {
            auto& g = (*grads)[s];
            const double k = static_cast<double>(set.support.rows());
            const double b = static_cast<double>(set.fused.rows());
            for (std::size_t i = 0; i < set.support.rows(); ++i) {
                auto dst = g.support.row(i);
                for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += grad_scale * d_gap(0, c) / (n_sets * k);
            }
            for (std::size_t i = 0; i < set.fused.rows(); ++i) {
                auto dst = g.fused.row(i);
                for (std::size_t c = 0; c < dst.size(); ++c) dst[c] -= grad_scale * d_gap(0, c) / (n_sets * b);
            }
        }
    }
    return loss / n_sets;
}

double soft_cross_entropy(const Matrix& rows, const Matrix& targets, const Classifier& classifier, Matrix* rows_grad,
                          Classifier* classifier_grad, double grad_scale) {
    const std::size_t n = classifier.classes();
    if (targets.rows() != rows.rows() || targets.cols() != n) {
        throw ShapeError("soft_cross_entropy: targets must be " + std::to_string(rows.rows()) + "x" +
                         std::to_string(n));
    }
    if (rows.rows() == 0) throw ConfigError("cross entropy over zero rows");
    const Matrix logits = classifier.logits(rows);
    const double m = static_cast<double>(rows.rows());
    Matrix d_logits(rows.rows(), n);
    double loss = 0.0;
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto l = logits.row(i);
        auto t = targets.row(i);
        const double lse = log_sum_exp(l);
        double mass = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            if (t[c] != 0.0) loss += t[c] * (lse - l[c]);
            mass += t[c];
        }
        for (std::size_t c = 0; c < n; ++c) d_logits(i, c) = (mass * std::exp(l[c] - lse) - t[c]) / m * grad_scale;
    }
    if (classifier_grad != nullptr) {
        auto gw = matmul_tn(d_logits, rows);
        auto gb = column_sums(d_logits);
        if (classifier_grad->weight.empty()) {
            *classifier_grad = {gw, gb};
        } else {
            classifier_grad->weight = add(classifier_grad->weight, gw);
            classifier_grad->bias = add(classifier_grad->bias, gb);
        }
    }
    if (rows_grad != nullptr) {
        Matrix gx = matmul(d_logits, classifier.weight);
        *rows_grad = rows_grad->empty() ? gx : add(*rows_grad, gx);
    }
    return loss / m;
}

double cross_entropy(const std::vector<RegularizedSet>& sets, const Classifier& classifier,
                     std::vector<SetGradients>* grads, Classifier* classifier_grad, const SoftTargetRows* extra,
                     Matrix* extra_grad, double grad_scale) {
    const std::size_t n = classifier.classes();
    const auto refs = flatten_rows(sets);
    const std::size_t base_rows = refs.size();
    const std::size_t extra_rows = extra != nullptr ? extra->features.rows() : 0;
    const std::size_t d = classifier.dim();

    Matrix rows(base_rows + extra_rows, d);
    Matrix targets(base_rows + extra_rows, n);
    for (std::size_t i = 0; i < base_rows; ++i) {
        const std::size_t label = sets[refs[i].set].label;
        if (label >= n) {
            throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(n) + ")");
        }
        auto src = row_of(sets, refs[i]);
        if (src.size() != d) throw ShapeError("cross_entropy: row dimension mismatch");
        std::copy(src.begin(), src.end(), rows.row(i).begin());
        targets(i, label) = 1.0;
    }
    for (std::size_t i = 0; i < extra_rows; ++i) {
        auto src = extra->features.row(i);
        auto t = extra->targets.row(i);
        std::copy(src.begin(), src.end(), rows.row(base_rows + i).begin());
        std::copy(t.begin(), t.end(), targets.row(base_rows + i).begin());
    }

    Matrix d_rows;
    const double loss = soft_cross_entropy(rows, targets, classifier, grads != nullptr || extra_grad != nullptr ? &d_rows : nullptr,
                                           classifier_grad, grad_scale);
    if (grads != nullptr) {
        for (std::size_t i = 0; i < base_rows; ++i) {
            auto dst = grad_row(*grads, refs[i]);
            auto src = d_rows.row(i);
            for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
    }
    if (extra_grad != nullptr && extra_rows > 0) {
        Matrix g(extra_rows, d);
        for (std::size_t i = 0; i < extra_rows; ++i) {
            auto src = d_rows.row(base_rows + i);
            std::copy(src.begin(), src.end(), g.row(i).begin());
        }
        *extra_grad = extra_grad->empty() ? g : add(*extra_grad, g);
    }
    return loss;
}

LossBreakdown total_loss(const std::vector<RegularizedSet>& sets, const Classifier& classifier, const LossConfig& cfg,
                         LossGradients* grads, const SoftTargetRows* extra) {
    if (cfg.mu1 < 0.0 || cfg.mu2 < 0.0) throw ConfigError("loss weights must be non-negative");
    if (!(cfg.tau > 0.0)) throw ConfigError("temperature must be positive");

    std::vector<SetGradients>* set_grads = nullptr;
    if (grads != nullptr) {
        grads->sets = zero_gradients(sets);
        grads->classifier = Classifier::zeros(classifier.classes(), classifier.dim());
        grads->extra = Matrix();
        set_grads = &grads->sets;
    }

    bool sc_defined = sets.size() >= 2;
    bool mse_defined = !sets.empty();
    for (const auto& s : sets) {
        sc_defined = sc_defined && s.size() >= 2;
        mse_defined = mse_defined && s.support.rows() > 0 && s.fused.rows() > 0;
    }

    LossBreakdown out;
    out.ce = cross_entropy(sets, classifier, set_grads, grads != nullptr ? &grads->classifier : nullptr, extra,
                           grads != nullptr ? &grads->extra : nullptr);
    if (cfg.mu1 != 0.0 || sc_defined) {
        out.sc = supervised_contrastive(sets, cfg.tau, cfg.normalize_for_sc, cfg.sc_sign,
                                        cfg.mu1 != 0.0 ? set_grads : nullptr, cfg.mu1);
    }
    if (cfg.mu2 != 0.0 || mse_defined) {
        out.mse = mean_gap_mse(sets, cfg.mse_norm, cfg.mu2 != 0.0 ? set_grads : nullptr, cfg.mu2);
    }
    out.total = out.ce + cfg.mu1 * out.sc + cfg.mu2 * out.mse;
    return out;
}

}  // namespace afr::losses
