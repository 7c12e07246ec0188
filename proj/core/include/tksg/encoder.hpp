#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tksg/layers.hpp"
#include "tksg/tensor.hpp"
#include "tksg/tensor_io.hpp"

namespace tksg {

// Raster-ordered patch extraction: [H x W x C] -> [N x (patch^2 * C)] with
// N = (H/patch) * (W/patch), patches scanned top-left to bottom-right.
template <typename T>
Tensor<T> patchify(const Tensor<T>& img, std::size_t patch) {
    if (img.rank() != 3) tensor_error("patchify", "expected [H x W x C] image");
    const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    if (patch == 0 || h % patch != 0 || w % patch != 0)
        tensor_error("patchify", "image " + shape_str(img.shape()) + " not divisible by patch " +
                                     std::to_string(patch));
    const std::size_t gh = h / patch, gw = w / patch;
    const std::size_t n = gh * gw, pd = patch * patch * c;

    std::vector<T> out(n * pd);
    auto src_index = [&](std::size_t y, std::size_t x, std::size_t ch) {
        return (y * w + x) * c + ch;
    };
    std::vector<std::size_t> scatter(n * pd);
    for (std::size_t gy = 0; gy < gh; ++gy)
        for (std::size_t gx = 0; gx < gw; ++gx) {
            const std::size_t row = gy * gw + gx;
            std::size_t k = 0;
            for (std::size_t py = 0; py < patch; ++py)
                for (std::size_t px = 0; px < patch; ++px)
                    for (std::size_t ch = 0; ch < c; ++ch, ++k) {
                        const std::size_t si = src_index(gy * patch + py, gx * patch + px, ch);
                        out[row * pd + k] = img.values()[si];
                        scatter[row * pd + k] = si;
                    }
        }
    auto node = detail::make_node("patchify", {n, pd}, std::move(out), {img});
    if (node->requires_grad) {
        auto pimg = img.node();
        node->backward_rule = [pimg, scatter](TensorNode<T>& self) {
            auto& g = pimg->grad_buffer();
            for (std::size_t i = 0; i < scatter.size(); ++i) g[scatter[i]] += self.grad[i];
        };
    }
    return Tensor<T>(node);
}

// Channel average: [H x W x 3] -> [H x W x 1].
template <typename T>
Tensor<T> rgb_to_gray(const Tensor<T>& img) {
    if (img.rank() != 3 || img.dim(2) != 3) tensor_error("rgb_to_gray", "expected [H x W x 3]");
    const std::size_t hw = img.dim(0) * img.dim(1);
    std::vector<T> out(hw);
    for (std::size_t i = 0; i < hw; ++i)
        out[i] = (img.values()[3 * i] + img.values()[3 * i + 1] + img.values()[3 * i + 2]) / T(3);
    auto node = detail::make_node("rgb_to_gray", {img.dim(0), img.dim(1), 1}, std::move(out), {img});
    if (node->requires_grad) {
        auto pimg = img.node();
        node->backward_rule = [pimg, hw](TensorNode<T>& self) {
            auto& g = pimg->grad_buffer();
            for (std::size_t i = 0; i < hw; ++i)
                for (int ch = 0; ch < 3; ++ch) g[3 * i + ch] += self.grad[i] / T(3);
        };
    }
    return Tensor<T>(node);
}

template <typename T>
struct EncoderLayer {
    MultiHeadAttention<T> attn;
    FeedForward<T> ffn;
    LayerNormLayer<T> ln1, ln2;

    EncoderLayer() = default;
    EncoderLayer(ParamSet<T>& ps, const std::string& name, std::size_t d, std::size_t heads,
                 std::size_t ffn_inner, std::uint64_t seed)
        : attn(ps, name + "/attn", d, heads, seed),
          ffn(ps, name + "/ffn", d, ffn_inner, seed),
          ln1(ps, name + "/ln1", d),
          ln2(ps, name + "/ln2", d) {}

    Tensor<T> forward(const Tensor<T>& x, AttentionProbe* probe, T drop,
                      std::mt19937_64* rng) const {
        auto normed = ln1.forward(x);
        auto a = add(x, maybe_dropout(attn.forward(normed, normed, false, probe), drop, rng));
        return add(a, maybe_dropout(ffn.forward(ln2.forward(a)), drop, rng));
    }
};

struct EncoderConfig {
    std::size_t patch = 16;
    std::size_t d_b = 64;
    std::size_t d_h = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t ffn_mult = 4;
    std::size_t grid = 8;  // max patches per image side
};

// Plain pre-norm patch transformer standing in for the pretrained extractor:
// linear patch embedding + learned 2-D position embedding, `layers` encoder
// blocks of width d_b, then a d_b -> d_h projection under layer norm.
template <typename T>
class PatchEncoder {
public:
    PatchEncoder() = default;
    PatchEncoder(const EncoderConfig& cfg, ParamSet<T>& ps, std::uint64_t seed) : cfg_(cfg) {
        patch_embed_ = Linear<T>(ps, "encoder/patch_embed", cfg.patch * cfg.patch, cfg.d_b, seed);
        auto row_rng = make_rng(seed, "init/encoder/pos_row");
        auto col_rng = make_rng(seed, "init/encoder/pos_col");
        pos_row_ = ps.add("encoder/pos_row", Tensor<T>::randn({cfg.grid, cfg.d_b}, row_rng, T(0.1)));
        pos_col_ = ps.add("encoder/pos_col", Tensor<T>::randn({cfg.grid, cfg.d_b}, col_rng, T(0.1)));
        for (std::size_t l = 0; l < cfg.layers; ++l)
            layers_.emplace_back(ps, "encoder/layer" + std::to_string(l), cfg.d_b, cfg.heads,
                                 cfg.d_b * cfg.ffn_mult, seed);
        out_proj_ = Linear<T>(ps, "encoder/out", cfg.d_b, cfg.d_h, seed);
        ln_out_ = LayerNormLayer<T>(ps, "encoder/ln_out", cfg.d_h);
    }

    const EncoderConfig& config() const { return cfg_; }

    // Image [H x W x C] -> visual features [N x d_h]. RGB inputs are averaged
    // to one channel; H and W must be divisible by the patch size and fit the
    // position grid.
    Tensor<T> encode(const Tensor<T>& img, AttentionProbe* probe = nullptr, T drop = T(0),
                     std::mt19937_64* rng = nullptr) const {
        if (img.rank() != 3) tensor_error("encode", "expected [H x W x C] image");
        if (img.dim(2) != 1 && img.dim(2) != 3)
            tensor_error("encode", "channel count must be 1 or 3");
        Tensor<T> gray = img.dim(2) == 3 ? rgb_to_gray(img) : img;
        const std::size_t gh = gray.dim(0) / cfg_.patch, gw = gray.dim(1) / cfg_.patch;
        auto x = patchify(gray, cfg_.patch);
        if (gh > cfg_.grid || gw > cfg_.grid)
            tensor_error("encode", "patch grid exceeds the configured position table");

        std::vector<std::size_t> rows(gh * gw), cols(gh * gw);
        for (std::size_t r = 0; r < gh; ++r)
            for (std::size_t c = 0; c < gw; ++c) {
                rows[r * gw + c] = r;
                cols[r * gw + c] = c;
            }
        auto h = add(patch_embed_.forward(x),
                     add(embedding_lookup(pos_row_, rows), embedding_lookup(pos_col_, cols)));
        h = maybe_dropout(h, drop, rng);
        for (const auto& layer : layers_) h = layer.forward(h, probe, drop, rng);
        return ln_out_.forward(out_proj_.forward(h));
    }

    // Precomputed-feature path: binary tensor file, ndim=2, dims[1] = d_h.
    Tensor<T> load_precomputed(const std::string& path) const {
        TensorFile f = load_tensor(path);
        if (f.shape.size() == 3) {
            std::vector<T> v(f.values.begin(), f.values.end());
            return encode(Tensor<T>::from(f.shape, std::move(v)));
        }
        if (f.shape.size() != 2)
            throw std::runtime_error("load_precomputed: expected 2-d features or 3-d image in " +
                                     path);
        if (f.shape[1] != cfg_.d_h)
            throw std::runtime_error("load_precomputed: feature width " +
                                     std::to_string(f.shape[1]) + " does not match d_h=" +
                                     std::to_string(cfg_.d_h) + " in " + path);
        std::vector<T> v(f.values.begin(), f.values.end());
        return Tensor<T>::from(f.shape, std::move(v));
    }

private:
    EncoderConfig cfg_;
    Linear<T> patch_embed_;
    Tensor<T> pos_row_, pos_col_;
    std::vector<EncoderLayer<T>> layers_;
    Linear<T> out_proj_;
    LayerNormLayer<T> ln_out_;
};

}  // namespace tksg
