#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tksg/layers.hpp"
#include "tksg/tensor.hpp"

namespace tksg {

template <typename T>
struct DecoderLayer {
    MultiHeadAttention<T> self_attn;
    MultiHeadAttention<T> guided_attn;
    FeedForward<T> ffn;
    LayerNormLayer<T> ln1, ln2, ln3;
    bool use_guidance = true;  // whether this layer appends E to its K/V

    DecoderLayer() = default;
    DecoderLayer(ParamSet<T>& ps, const std::string& name, std::size_t d, std::size_t heads,
                 std::size_t ffn_inner, std::uint64_t seed, bool guided)
        : self_attn(ps, name + "/self", d, heads, seed),
          guided_attn(ps, name + "/sg", d, heads, seed),
          ffn(ps, name + "/ffn", d, ffn_inner, seed),
          ln1(ps, name + "/ln1", d),
          ln2(ps, name + "/ln2", d),
          ln3(ps, name + "/ln3", d),
          use_guidance(guided) {}
};

struct ReportDecoderConfig {
    std::size_t d_h = 64;
    std::size_t layers = 3;
    std::size_t heads = 8;
    std::size_t t_max = 60;
    std::size_t ffn_mult = 4;
    std::size_t vocab_size = 0;
    std::vector<bool> sg_layer_mask;  // empty = guidance in every layer
};

// Pre-norm transformer decoder with topic-fused input embeddings and
// semantic-guided cross-attention over [X;E].
template <typename T>
class ReportDecoder {
public:
    ReportDecoder() = default;
    ReportDecoder(const ReportDecoderConfig& cfg, ParamSet<T>& ps, std::uint64_t seed) : cfg_(cfg) {
        auto word_rng = make_rng(seed, "init/decoder/word");
        auto pos_rng = make_rng(seed, "init/decoder/pos");
        word_emb_ = ps.add("decoder/word", Tensor<T>::randn({cfg.vocab_size, cfg.d_h}, word_rng, T(0.1)));
        pos_emb_ = ps.add("decoder/pos", Tensor<T>::randn({cfg.t_max, cfg.d_h}, pos_rng, T(0.1)));
        ln_embed_ = LayerNormLayer<T>(ps, "decoder/ln_embed", cfg.d_h);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const bool guided = cfg.sg_layer_mask.empty() || cfg.sg_layer_mask[l];
            layers_.emplace_back(ps, "decoder/layer" + std::to_string(l), cfg.d_h, cfg.heads,
                                 cfg.d_h * cfg.ffn_mult, seed, guided);
        }
        ln_final_ = LayerNormLayer<T>(ps, "decoder/ln_final", cfg.d_h);
        // classifier head starts at zero so the initial distribution is uniform
        cls_ = ps.add("decoder/cls", Tensor<T>::zeros({cfg.d_h, cfg.vocab_size}));
    }

    const ReportDecoderConfig& config() const { return cfg_; }

    // Embeddings for one teacher-forced prefix: e_t = LN(W_word[y_{t-1}] +
    // W_pos[t] + l), with the topic vector added at every timestep.
    Tensor<T> embed_inputs(const std::vector<std::size_t>& prev_ids, const Tensor<T>& topic_vec,
                           T drop = T(0), std::mt19937_64* rng = nullptr) const {
        if (prev_ids.empty()) tensor_error("embed_inputs", "empty input sequence");
        if (prev_ids.size() > cfg_.t_max)
            tensor_error("embed_inputs", "sequence length " + std::to_string(prev_ids.size()) +
                                             " exceeds t_max " + std::to_string(cfg_.t_max));
        std::vector<std::size_t> positions(prev_ids.size());
        std::iota(positions.begin(), positions.end(), 0);
        auto e = add(embedding_lookup(word_emb_, prev_ids), embedding_lookup(pos_emb_, positions));
        if (topic_vec.valid()) e = add(e, broadcast_rows(topic_vec, prev_ids.size()));
        return maybe_dropout(ln_embed_.forward(e), drop, rng);
    }

    // Full causal stack: masked self-attention, guided cross-attention over
    // [X;E] (or X where guidance is off/absent), position-wise FFN.
    Tensor<T> forward(const Tensor<T>& embeddings, const Tensor<T>& visual,
                      const Tensor<T>& keyword_emb, AttentionProbe* probe = nullptr, T drop = T(0),
                      std::mt19937_64* rng = nullptr) const {
        Tensor<T> x = embeddings;
        const bool have_keywords = keyword_emb.valid() && keyword_emb.dim(0) > 0;
        for (const auto& layer : layers_) {
            auto normed = layer.ln1.forward(x);
            x = add(x, maybe_dropout(layer.self_attn.forward(normed, normed, true, probe), drop, rng));
            const Tensor<T> kv = (have_keywords && layer.use_guidance)
                                     ? concat_rows(visual, keyword_emb)
                                     : visual;
            x = add(x, maybe_dropout(layer.guided_attn.forward(layer.ln2.forward(x), kv, false, probe),
                                     drop, rng));
            x = add(x, maybe_dropout(layer.ffn.forward(layer.ln3.forward(x)), drop, rng));
        }
        return ln_final_.forward(x);
    }

    // Softmax(h W_cls): one probability row per decoded position.
    Tensor<T> predict(const Tensor<T>& hidden) const { return softmax(matmul(hidden, cls_), 1); }

    // Eq-style mean token NLL over the gold sequence, EOS position included.
    Tensor<T> report_loss(const Tensor<T>& predictions, const std::vector<std::size_t>& gold) const {
        if (gold.empty()) tensor_error("report_loss", "empty gold sequence");
        return nll_rows(predictions, gold);
    }

private:
    ReportDecoderConfig cfg_;
    Tensor<T> word_emb_, pos_emb_;
    LayerNormLayer<T> ln_embed_;
    std::vector<DecoderLayer<T>> layers_;
    LayerNormLayer<T> ln_final_;
    Tensor<T> cls_;
};

// L_all = L_rep + L_kd + L_td, the unweighted sum; absent branches contribute
// nothing.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_rep, const Tensor<T>& l_kd, const Tensor<T>& l_td) {
    Tensor<T> out = l_rep;
    if (l_kd.valid()) out = add(out, l_kd);
    if (l_td.valid()) out = add(out, l_td);
    return out;
}

}  // namespace tksg
