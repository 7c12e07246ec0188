#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "tksg/config.hpp"
#include "tksg/corpus.hpp"
#include "tksg/decoder.hpp"
#include "tksg/encoder.hpp"
#include "tksg/guidance.hpp"
#include "tksg/search.hpp"
#include "tksg/tensor_io.hpp"

namespace tksg {

// "all" or a comma-separated list of 0-based layer indices.
inline std::vector<bool> parse_sg_layers(const std::string& sg_layers, std::size_t n_layers) {
    if (sg_layers.empty() || sg_layers == "all") return {};
    std::vector<bool> mask(n_layers, false);
    std::stringstream ss(sg_layers);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::size_t idx = std::stoul(item);
        if (idx >= n_layers)
            throw std::invalid_argument("sg_layers: index " + item + " out of range");
        mask[idx] = true;
    }
    return mask;
}

struct ModelConfig {
    EncoderConfig encoder;
    ReportDecoderConfig decoder;
    std::size_t d_h = 64;
    std::size_t n_w = 100;
    std::size_t n_k = 20;
    std::size_t d_e = 32;
    Variant variant = Variant::kTksg;

    static ModelConfig from_run(const RunConfig& run, std::size_t vocab_size, std::size_t d_e) {
        ModelConfig cfg;
        cfg.d_h = run.d_h;
        cfg.n_w = run.n_w;
        cfg.n_k = run.n_k;
        cfg.d_e = d_e;
        cfg.variant = run.variant_enum();
        cfg.encoder = {run.patch, run.d_b, run.d_h, run.enc_layers,
                       run.n_heads, run.ffn_mult, run.enc_grid};
        cfg.decoder.d_h = run.d_h;
        cfg.decoder.layers = run.dec_layers;
        cfg.decoder.heads = run.n_heads;
        cfg.decoder.t_max = run.t_max;
        cfg.decoder.ffn_mult = run.ffn_mult;
        cfg.decoder.vocab_size = vocab_size;
        cfg.decoder.sg_layer_mask = parse_sg_layers(run.sg_layers, run.dec_layers);
        return cfg;
    }
};

// Per-sample guidance products: the topic vector used at every decoding step
// and the selected keyword embeddings for the attention K/V.
template <typename T>
struct Guidance {
    Tensor<T> topic_probs;   // valid when the topic branch is on
    Tensor<T> topic_vec;
    Tensor<T> keyword_probs; // valid when the keyword branch is on
    std::vector<std::size_t> selection;
    Tensor<T> keyword_emb;
};

template <typename T>
struct LossBreakdown {
    Tensor<T> report;
    Tensor<T> keyword;  // invalid when the branch is gated off
    Tensor<T> topic;
    Tensor<T> total;
};

// The full report-generation pipeline over one trainable parameter set.
template <typename T>
class TksgModel {
public:
    TksgModel(const ModelConfig& cfg, std::uint64_t seed)
        : cfg_(cfg),
          encoder_(cfg.encoder, params_, seed),
          projector_(cfg.d_e, cfg.d_h, params_, seed),
          topic_(cfg.d_h, params_, seed),
          keyword_(cfg.d_h, cfg.n_w, cfg.n_k, params_, seed),
          decoder_(cfg.decoder, params_, seed) {}

    const ModelConfig& config() const { return cfg_; }
    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }
    PatchEncoder<T>& encoder() { return encoder_; }
    const PatchEncoder<T>& encoder() const { return encoder_; }
    ReportProjector<T>& projector() { return projector_; }
    TopicGuidance<T>& topic() { return topic_; }
    KeywordGuidance<T>& keyword() { return keyword_; }
    ReportDecoder<T>& decoder() { return decoder_; }

    void set_attention_probe(AttentionProbe* probe) { probe_ = probe; }
    AttentionProbe* attention_probe() const { return probe_; }

    // Parameters whose names start with "encoder/"; the rest form the second
    // optimizer group.
    std::vector<Tensor<T>> encoder_params() const { return group(true); }
    std::vector<Tensor<T>> rest_params() const { return group(false); }

    // Topic and keyword branches per the active variant. retrieval_raw is the
    // frozen [n_ret x d_e] matrix of retrieved report embeddings; it may be
    // invalid when the keyword branch is gated off.
    Guidance<T> guide(const Tensor<T>& visual, const Tensor<T>& retrieval_raw) const {
        Guidance<T> g;
        if (uses_topic_guidance(cfg_.variant)) {
            g.topic_probs = topic_.detect(mean_pool(visual));
            g.topic_vec = topic_.aggregate(g.topic_probs);
        }
        if (uses_keyword_guidance(cfg_.variant)) {
            if (!retrieval_raw.valid())
                throw std::invalid_argument("guide: keyword guidance needs retrieved reports");
            auto fused = concat_rows(mean_pool(visual), mean_pool(projector_.forward(retrieval_raw)));
            g.keyword_probs = keyword_.detect(fused);
            g.selection = keyword_.select(g.keyword_probs);
            g.keyword_emb = keyword_.embed(g.selection);
        }
        return g;
    }

    // Teacher-forced losses for one sample. gold holds the report token ids
    // without BOS/EOS; sequences longer than t_max are truncated.
    LossBreakdown<T> losses(const Tensor<T>& visual, const Guidance<T>& g,
                            const std::vector<std::size_t>& gold,
                            const std::array<std::uint8_t, kTopicCount>& topic_labels,
                            const std::vector<std::uint8_t>& concept_labels, T drop = T(0),
                            std::mt19937_64* rng = nullptr) const {
        std::vector<std::size_t> inputs, targets;
        inputs.push_back(Vocabulary::kBos);
        inputs.insert(inputs.end(), gold.begin(), gold.end());
        targets = gold;
        targets.push_back(Vocabulary::kEos);
        if (inputs.size() > cfg_.decoder.t_max) {
            inputs.resize(cfg_.decoder.t_max);
            targets.resize(cfg_.decoder.t_max);
        }

        auto e = decoder_.embed_inputs(inputs, g.topic_vec, drop, rng);
        auto h = decoder_.forward(e, visual, g.keyword_emb, probe_, drop, rng);
        auto probs = decoder_.predict(h);

        LossBreakdown<T> out;
        out.report = decoder_.report_loss(probs, targets);
        if (g.keyword_probs.valid()) out.keyword = keyword_.loss(g.keyword_probs, concept_labels);
        if (g.topic_probs.valid()) out.topic = topic_.loss(g.topic_probs, topic_labels);
        out.total = total_loss(out.report, out.keyword, out.topic);
        return out;
    }

    // Next-token log-probability closure over a frozen model; rebuilds the
    // prefix each step.
    StepFn step_fn(const Tensor<T>& visual, const Guidance<T>& g,
                   std::vector<std::vector<T>>* topic_trace = nullptr) const {
        return [this, visual, g, topic_trace](const std::vector<std::size_t>& prefix) {
            std::vector<std::size_t> inputs;
            inputs.push_back(Vocabulary::kBos);
            inputs.insert(inputs.end(), prefix.begin(), prefix.end());
            auto e = decoder_.embed_inputs(inputs, g.topic_vec);
            auto h = decoder_.forward(e, visual, g.keyword_emb, probe_);
            auto probs = decoder_.predict(h);
            if (topic_trace)
                topic_trace->push_back(g.topic_vec.valid() ? g.topic_vec.values()
                                                           : std::vector<T>{});
            const std::size_t v = probs.dim(1), last = probs.dim(0) - 1;
            std::vector<double> logp(v);
            for (std::size_t i = 0; i < v; ++i)
                logp[i] = std::log(static_cast<double>(probs.at(last, i)));
            return logp;
        };
    }

    DecodeResult decode(const Tensor<T>& visual, const Guidance<T>& g, std::size_t beam,
                        std::vector<std::vector<T>>* topic_trace = nullptr) const {
        auto step = step_fn(visual, g, topic_trace);
        if (beam == 1) return greedy_decode(step, cfg_.decoder.vocab_size, cfg_.decoder.t_max);
        return beam_search(step, cfg_.decoder.vocab_size, beam, cfg_.decoder.t_max);
    }

    // One binary tensor file per parameter under dir/params/.
    void save_params(const std::string& dir) const {
        namespace fs = std::filesystem;
        for (const auto& [name, t] : params_.items()) {
            const fs::path path = fs::path(dir) / "params" / (name + ".bin");
            fs::create_directories(path.parent_path());
            save_tensor(path.string(), t);
        }
    }

    void load_params(const std::string& dir) {
        namespace fs = std::filesystem;
        for (const auto& [name, t] : params_.items()) {
            const fs::path path = fs::path(dir) / "params" / (name + ".bin");
            TensorFile f = load_tensor(path.string());
            if (f.shape != t.shape())
                throw std::runtime_error("checkpoint: shape mismatch for parameter '" + name +
                                         "' in " + dir);
            Tensor<T> handle = t;  // shared node
            auto& dst = handle.mutable_values();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(f.values[i]);
        }
    }

private:
    std::vector<Tensor<T>> group(bool encoder_side) const {
        std::vector<Tensor<T>> out;
        for (const auto& [name, t] : params_.items())
            if ((name.rfind("encoder/", 0) == 0) == encoder_side) out.push_back(t);
        return out;
    }

    ModelConfig cfg_;
    ParamSet<T> params_;
    PatchEncoder<T> encoder_;
    ReportProjector<T> projector_;
    TopicGuidance<T> topic_;
    KeywordGuidance<T> keyword_;
    ReportDecoder<T> decoder_;
    AttentionProbe* probe_ = nullptr;
};

}  // namespace tksg
