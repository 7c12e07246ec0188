#include "tksg/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "tksg/rng.hpp"

namespace tksg {

using nlohmann::json;

Variant parse_variant(const std::string& name) {
    if (name == "BASE") return Variant::kBase;
    if (name == "TSG") return Variant::kTsg;
    if (name == "KSG") return Variant::kKsg;
    if (name == "TKSG") return Variant::kTksg;
    throw std::invalid_argument("unknown variant '" + name + "' (expected BASE|TSG|KSG|TKSG)");
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::kBase: return "BASE";
        case Variant::kTsg: return "TSG";
        case Variant::kKsg: return "KSG";
        case Variant::kTksg: return "TKSG";
    }
    return "?";
}

RunConfig RunConfig::reference_profile() {
    RunConfig c;
    c.d_h = 512;
    c.d_b = 768;
    c.enc_layers = 2;
    c.dec_layers = 3;
    c.n_heads = 8;
    c.lr_encoder = 2e-4;
    c.lr_rest = 5e-4;
    return c;
}

void RunConfig::validate() const {
    if (d_h == 0 || d_b == 0 || enc_layers == 0 || dec_layers == 0 || n_heads == 0 || t_max == 0 ||
        patch == 0 || enc_grid == 0 || ffn_mult == 0 || n_r == 0 || n_w == 0 || n_k == 0)
        throw std::invalid_argument("config: all dimensions must be positive");
    if (d_h % n_heads != 0)
        throw std::invalid_argument("config: d_h must be divisible by n_heads");
    if (n_k > n_w) throw std::invalid_argument("config: n_k must be <= n_w");
    if (beam == 0) throw std::invalid_argument("config: beam must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("config: dropout must be in [0,1)");
    if (seed == 0) throw std::invalid_argument("config: a nonzero seed is mandatory");
    parse_variant(variant);
}

namespace {

#define TKSG_CONFIG_FIELDS(X)                                                                  \
    X(d_h) X(d_b) X(enc_layers) X(dec_layers) X(n_heads) X(t_max) X(patch) X(enc_grid)         \
    X(ffn_mult) X(n_r) X(n_w) X(n_k) X(variant) X(sg_layers) X(lr_encoder) X(lr_rest) X(lr_decay) \
    X(epochs) X(batch_size) X(patience) X(dropout) X(beam) X(seed) X(min_count)                \
    X(exclude_self) X(corpus) X(vocab) X(concepts) X(stopwords) X(index) X(index_ids)          \
    X(queries) X(queries_ids) X(synth_spec) X(out_dir)

}  // namespace

std::string RunConfig::to_json(int indent) const {
    json j;
#define TKSG_PUT(name) j[#name] = name;
    TKSG_CONFIG_FIELDS(TKSG_PUT)
#undef TKSG_PUT
    return j.dump(indent);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    RunConfig c;
#define TKSG_GET(name)                                        \
    if (j.contains(#name)) j.at(#name).get_to(c.name);
    TKSG_CONFIG_FIELDS(TKSG_GET)
#undef TKSG_GET
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

void RunConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("config: cannot open " + path);
    out << to_json(2) << '\n';
}

std::string RunConfig::hash_hex() const {
    const std::uint64_t h = hash_str(to_json());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf, 8);  // first 8 hex digits are plenty at desk scale
}

std::string RunConfig::run_dir() const {
    return out_dir + "/run-" + hash_hex() + "-s" + std::to_string(seed);
}

}  // namespace tksg
