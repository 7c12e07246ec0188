#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "tksg/encoder.hpp"
#include "tksg/rng.hpp"
#include "tksg/tensor_io.hpp"

using namespace tksg;

namespace {

Tensor<double> random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
    auto rng = make_rng(seed, "img");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(h * w * c);
    for (auto& x : v) x = u(rng);
    return Tensor<double>::from({h, w, c}, std::move(v));
}

// zero everything except layer-norm gains
void zero_linear_params(ParamSet<double>& ps) {
    for (const auto& [name, t] : ps.items()) {
        if (name.size() >= 2 && name.compare(name.size() - 2, 2, "/g") == 0) continue;
        Tensor<double> h = t;
        std::fill(h.mutable_values().begin(), h.mutable_values().end(), 0.0);
    }
}

}  // namespace

TEST_CASE("patchify: shape arithmetic and raster order") {
    auto img = random_image(64, 64, 1, 1);
    auto p = patchify(img, 16);
    CHECK(p.shape() == Shape{16, 256});

    auto tiny = random_image(16, 16, 1, 2);
    auto p1 = patchify(tiny, 16);
    CHECK(p1.shape() == Shape{1, 256});
    CHECK(p1.values() == tiny.values());  // single patch equals the flattened image

    auto constant = Tensor<double>::filled({32, 32, 1}, 0.25);
    auto pc = patchify(constant, 16);
    for (std::size_t r = 1; r < pc.dim(0); ++r)
        for (std::size_t c = 0; c < pc.dim(1); ++c) CHECK(pc.at(r, c) == pc.at(0, c));

    CHECK_THROWS_AS(patchify(random_image(30, 32, 1, 3), 16), std::invalid_argument);
}

TEST_CASE("encode: zero weights yield zero features; contract shape holds") {
    EncoderConfig cfg{8, 12, 10, 2, 2, 2, 4};
    ParamSet<double> ps;
    PatchEncoder<double> enc(cfg, ps, 99);

    auto img = random_image(16, 16, 1, 4);
    CHECK(enc.encode(img).shape() == Shape{4, 10});

    zero_linear_params(ps);
    auto x = enc.encode(img);
    for (auto v : x.values()) CHECK(v == 0.0);
}

TEST_CASE("encode: RGB images are averaged to one channel") {
    EncoderConfig cfg{8, 12, 10, 1, 2, 2, 4};
    ParamSet<double> ps;
    PatchEncoder<double> enc(cfg, ps, 7);

    auto rgb = random_image(8, 8, 3, 5);
    std::vector<double> gray(64);
    for (std::size_t i = 0; i < 64; ++i)
        gray[i] = (rgb.values()[3 * i] + rgb.values()[3 * i + 1] + rgb.values()[3 * i + 2]) / 3.0;
    auto from_rgb = enc.encode(rgb);
    auto from_gray = enc.encode(Tensor<double>::from({8, 8, 1}, gray));
    for (std::size_t i = 0; i < from_rgb.numel(); ++i)
        CHECK(from_rgb.values()[i] == doctest::Approx(from_gray.values()[i]).epsilon(1e-12));
}

TEST_CASE("encode: deterministic and differentiable down to pixels") {
    EncoderConfig cfg{4, 8, 8, 2, 2, 2, 4};
    ParamSet<double> ps;
    PatchEncoder<double> enc(cfg, ps, 21);

    auto img = random_image(8, 8, 1, 6);
    auto a = enc.encode(img);
    auto b = enc.encode(img);
    CHECK(a.values() == b.values());

    img.set_requires_grad();
    auto fd = tksg::testing::gradcheck<double>(
        {img}, [&] { return mean(enc.encode(img)); }, 1e-5);
    CHECK_MESSAGE(fd.max_err <= 1e-4, fd.worst);
}

TEST_CASE("load_precomputed: round trip, wrong width, bad magic") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "tksg_enc_test";
    fs::create_directories(dir);

    EncoderConfig cfg;
    cfg.d_h = 6;
    ParamSet<double> ps;
    PatchEncoder<double> enc(cfg, ps, 3);

    auto rng = make_rng(8, "feat");
    auto feats = Tensor<double>::randn({5, 6}, rng, 1.0);
    const auto path = (dir / "feat.bin").string();
    save_tensor(path, feats);
    auto loaded = enc.load_precomputed(path);
    CHECK(loaded.shape() == feats.shape());
    for (std::size_t i = 0; i < feats.numel(); ++i)
        CHECK(static_cast<float>(feats.values()[i]) == static_cast<float>(loaded.values()[i]));

    auto wrong = Tensor<double>::randn({5, 7}, rng, 1.0);
    const auto wrong_path = (dir / "wrong.bin").string();
    save_tensor(wrong_path, wrong);
    CHECK_THROWS_AS(enc.load_precomputed(wrong_path), std::runtime_error);

    const auto bad_path = (dir / "bad.bin").string();
    {
        std::ofstream out(bad_path, std::ios::binary);
        out << "NOPE1234";
    }
    CHECK_THROWS_AS(enc.load_precomputed(bad_path), std::runtime_error);
}
