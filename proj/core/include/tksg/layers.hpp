#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "tksg/rng.hpp"
#include "tksg/tensor.hpp"

namespace tksg {

// Ordered named parameters. Registration order fixes the optimizer update
// order; initialization streams are derived from the parameter name so the
// values do not depend on that order.
template <typename T>
class ParamSet {
public:
    Tensor<T> add(const std::string& name, Tensor<T> t) {
        t.set_requires_grad();
        items_.emplace_back(name, t);
        return t;
    }

    const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }

    std::vector<Tensor<T>> tensors() const {
        std::vector<Tensor<T>> out;
        out.reserve(items_.size());
        for (const auto& [name, t] : items_) out.push_back(t);
        return out;
    }

    Tensor<T> find(const std::string& name) const {
        for (const auto& [n, t] : items_)
            if (n == name) return t;
        throw std::invalid_argument("param set: no parameter named '" + name + "'");
    }

    void zero_grad() {
        for (auto& [n, t] : items_) t.zero_grad();
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [name, t] : items_) n += t.numel();
        return n;
    }

private:
    std::vector<std::pair<std::string, Tensor<T>>> items_;
};

// Collects attention row sums across every softmax the model computes;
// installed by tests that assert the normalization invariant.
struct AttentionProbe {
    std::vector<double> row_sums;

    template <typename T>
    void record(const Tensor<T>& attn) {
        const std::size_t rows = attn.dim(0), cols = attn.dim(1);
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0;
            for (std::size_t c = 0; c < cols; ++c) s += static_cast<double>(attn.values()[r * cols + c]);
            row_sums.push_back(s);
        }
    }
};

template <typename T>
struct Linear {
    Tensor<T> w;
    Tensor<T> b;
    bool has_bias = true;

    Linear() = default;
    Linear(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t out,
           std::uint64_t seed, bool bias = true, double init_scale = -1.0)
        : has_bias(bias) {
        auto rng = make_rng(seed, "init/" + name + "/w");
        const T std = init_scale > 0 ? static_cast<T>(init_scale)
                                     : static_cast<T>(1.0 / std::sqrt(static_cast<double>(in)));
        w = ps.add(name + "/w", Tensor<T>::randn({in, out}, rng, std));
        if (bias) b = ps.add(name + "/b", Tensor<T>::zeros({out}));
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        auto y = matmul(x, w);
        if (!has_bias) return y;
        return y.rank() == 2 ? add_rowwise(y, b) : add(y, b);
    }
};

template <typename T>
struct LayerNormLayer {
    Tensor<T> gamma;
    Tensor<T> beta;
    T eps = T(1e-5);

    LayerNormLayer() = default;
    LayerNormLayer(ParamSet<T>& ps, const std::string& name, std::size_t d) {
        gamma = ps.add(name + "/g", Tensor<T>::filled({d}, T(1)));
        beta = ps.add(name + "/b", Tensor<T>::zeros({d}));
    }

    Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }
};

// Multi-head scaled dot-product attention with learned Q/K/V/output
// projections. The softmax scale uses the per-head dimension.
template <typename T>
struct MultiHeadAttention {
    std::size_t n_heads = 1;
    std::size_t d_model = 0;
    Linear<T> wq, wk, wv, wo;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamSet<T>& ps, const std::string& name, std::size_t d, std::size_t heads,
                       std::uint64_t seed)
        : n_heads(heads),
          d_model(d),
          wq(ps, name + "/q", d, d, seed),
          wk(ps, name + "/k", d, d, seed),
          wv(ps, name + "/v", d, d, seed),
          wo(ps, name + "/o", d, d, seed) {
        if (d % heads != 0)
            throw std::invalid_argument("attention: d_model must be divisible by head count");
    }

    Tensor<T> forward(const Tensor<T>& q_in, const Tensor<T>& kv_in, bool causal,
                      AttentionProbe* probe = nullptr) const {
        auto q = wq.forward(q_in);
        auto k = wk.forward(kv_in);
        auto v = wv.forward(kv_in);
        const std::size_t d_head = d_model / n_heads;
        const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_head)));

        std::vector<Tensor<T>> heads;
        heads.reserve(n_heads);
        for (std::size_t h = 0; h < n_heads; ++h) {
            auto qh = slice_cols(q, h * d_head, (h + 1) * d_head);
            auto kh = slice_cols(k, h * d_head, (h + 1) * d_head);
            auto vh = slice_cols(v, h * d_head, (h + 1) * d_head);
            auto scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
            if (causal) scores = add_causal_mask(scores);
            auto attn = softmax(scores, 1);
            if (probe) probe->record(attn);
            heads.push_back(matmul(attn, vh));
        }
        return wo.forward(concat_cols(heads));
    }
};

template <typename T>
struct FeedForward {
    Linear<T> up, down;

    FeedForward() = default;
    FeedForward(ParamSet<T>& ps, const std::string& name, std::size_t d, std::size_t inner,
                std::uint64_t seed)
        : up(ps, name + "/up", d, inner, seed), down(ps, name + "/down", inner, d, seed) {}

    Tensor<T> forward(const Tensor<T>& x) const { return down.forward(relu(up.forward(x))); }
};

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, T rate, std::mt19937_64* rng) {
    if (!rng || rate <= T(0)) return x;
    return dropout(x, rate, *rng);
}

}  // namespace tksg
