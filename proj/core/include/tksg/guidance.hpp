#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "tksg/corpus.hpp"
#include "tksg/layers.hpp"
#include "tksg/tensor.hpp"

namespace tksg {

// Topic detector and aggregation: 14 sigmoid probabilities from pooled visual
// features, then a bare linear map to the d_h topic vector.
template <typename T>
class TopicGuidance {
public:
    TopicGuidance() = default;
    TopicGuidance(std::size_t d_h, ParamSet<T>& ps, std::uint64_t seed)
        : detector_(ps, "topic/detector", d_h, kTopicCount, seed),
          fc_(ps, "topic/fc", kTopicCount, d_h, seed) {}

    // x = f(X), mean-pooled visual features
    Tensor<T> detect(const Tensor<T>& x) const { return sigmoid(detector_.forward(x)); }

    Tensor<T> aggregate(const Tensor<T>& probs) const { return fc_.forward(probs); }

    Tensor<T> loss(const Tensor<T>& probs, const std::array<std::uint8_t, kTopicCount>& labels) const {
        std::vector<T> targets(labels.begin(), labels.end());
        return bce_mean(probs, targets);
    }

private:
    Linear<T> detector_;
    Linear<T> fc_;
};

// Indices of the k largest probabilities, output sorted by probability
// descending with ties broken toward the lower index.
template <typename T>
std::vector<std::size_t> select_topk(const std::vector<T>& probs, std::size_t k) {
    if (k > probs.size())
        throw std::invalid_argument("select_topk: k exceeds the number of concepts");
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
    });
    order.resize(k);
    return order;
}

// Keyword detector over fused [f(X); f(R)] features plus the keyword/rank
// embedding table pair.
template <typename T>
class KeywordGuidance {
public:
    KeywordGuidance() = default;
    KeywordGuidance(std::size_t d_h, std::size_t n_w, std::size_t n_k, ParamSet<T>& ps,
                    std::uint64_t seed)
        : n_w_(n_w), n_k_(n_k), detector_(ps, "keyword/detector", 2 * d_h, n_w, seed) {
        auto emb_rng = make_rng(seed, "init/keyword/emb");
        auto rank_rng = make_rng(seed, "init/keyword/rank");
        word_emb_ = ps.add("keyword/emb", Tensor<T>::randn({n_w, d_h}, emb_rng, T(0.1)));
        rank_emb_ = ps.add("keyword/rank", Tensor<T>::randn({n_k, d_h}, rank_rng, T(0.1)));
        ln_ = LayerNormLayer<T>(ps, "keyword/ln", d_h);
    }

    std::size_t n_w() const { return n_w_; }
    std::size_t n_k() const { return n_k_; }

    // x = [f(X); f(R)], a 2*d_h vector
    Tensor<T> detect(const Tensor<T>& fused) const { return sigmoid(detector_.forward(fused)); }

    Tensor<T> loss(const Tensor<T>& probs, const std::vector<std::uint8_t>& labels) const {
        std::vector<T> targets(labels.begin(), labels.end());
        return bce_mean(probs, targets);
    }

    std::vector<std::size_t> select(const Tensor<T>& probs) const {
        return select_topk(probs.values(), n_k_);
    }

    // E_i = LN(W_emb[s_i] + W_rank[i]); the rank row follows the position in
    // the selection, not the concept id. Selection indices are constants to
    // the gradient.
    Tensor<T> embed(const std::vector<std::size_t>& selection) const {
        std::vector<std::size_t> ranks(selection.size());
        std::iota(ranks.begin(), ranks.end(), 0);
        return ln_.forward(
            add(embedding_lookup(word_emb_, selection), embedding_lookup(rank_emb_, ranks)));
    }

private:
    std::size_t n_w_ = 0, n_k_ = 0;
    Linear<T> detector_;
    Tensor<T> word_emb_, rank_emb_;
    LayerNormLayer<T> ln_;
};

// Trainable bridge from frozen retrieval embeddings (d_e) into model space
// (d_h): linear map plus layer norm.
template <typename T>
class ReportProjector {
public:
    ReportProjector() = default;
    ReportProjector(std::size_t d_e, std::size_t d_h, ParamSet<T>& ps, std::uint64_t seed)
        : proj_(ps, "retrieval/proj", d_e, d_h, seed), ln_(ps, "retrieval/ln", d_h) {}

    Tensor<T> forward(const Tensor<T>& raw) const { return ln_.forward(proj_.forward(raw)); }

private:
    Linear<T> proj_;
    LayerNormLayer<T> ln_;
};

}  // namespace tksg
