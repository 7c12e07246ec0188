#pragma once

#include <cstdint>
#include <string>

namespace tksg {

enum class Variant { kBase, kTsg, kKsg, kTksg };

Variant parse_variant(const std::string& name);
const char* variant_name(Variant v);

inline bool uses_topic_guidance(Variant v) { return v == Variant::kTsg || v == Variant::kTksg; }
inline bool uses_keyword_guidance(Variant v) { return v == Variant::kKsg || v == Variant::kTksg; }

// One experiment's knobs. Every field can come from a JSON config file and be
// overridden by the CLI flag of the same name.
struct RunConfig {
    // model dims (desk profile defaults)
    std::size_t d_h = 64;
    std::size_t d_b = 64;
    std::size_t enc_layers = 2;
    std::size_t dec_layers = 3;
    std::size_t n_heads = 8;
    std::size_t t_max = 60;
    std::size_t patch = 16;
    std::size_t enc_grid = 8;   // max patches per image side
    std::size_t ffn_mult = 4;

    // guidance
    std::size_t n_r = 30;
    std::size_t n_w = 100;
    std::size_t n_k = 20;
    std::string variant = "TKSG";
    std::string sg_layers = "all";  // decoder layers that append E to their K/V

    // optimizer / schedule
    double lr_encoder = 1e-3;
    double lr_rest = 1e-3;
    double lr_decay = 0.8;
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    std::size_t patience = 5;
    double dropout = 0.1;

    // decoding
    std::size_t beam = 3;

    std::uint64_t seed = 0;
    std::size_t min_count = 1;
    bool exclude_self = true;

    // artifact paths
    std::string corpus;
    std::string vocab;
    std::string concepts;
    std::string stopwords;
    std::string index;
    std::string index_ids;
    std::string queries;
    std::string queries_ids;
    std::string synth_spec;  // enables rule-based CE labeling when set
    std::string out_dir = "runs";

    // §IV-C full-scale reference numbers; not trainable at desk scale but kept
    // as a ready-made profile
    static RunConfig reference_profile();
    static RunConfig desk_profile() { return RunConfig{}; }

    void validate() const;
    Variant variant_enum() const { return parse_variant(variant); }

    std::string to_json(int indent = -1) const;
    static RunConfig from_json_text(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;

    // FNV-1a over the canonical JSON dump; names the run directory together
    // with the seed
    std::string hash_hex() const;
    std::string run_dir() const;
};

}  // namespace tksg
