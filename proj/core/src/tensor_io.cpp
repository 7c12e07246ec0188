#include "tksg/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tksg {

namespace {

constexpr char kMagic[4] = {'T', 'K', 'S', 'G'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_tensor(const std::string& path, const Shape& shape, const std::vector<float>& values) {
    if (shape_numel(shape) != values.size())
        throw std::invalid_argument("save_tensor: shape/value mismatch for " + path);
    std::string buf;
    buf.reserve(9 + 4 * shape.size() + 4 * values.size());
    buf.append(kMagic, 4);
    buf.push_back(static_cast<char>(kVersion));
    put_u32(buf, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_u32(buf, static_cast<std::uint32_t>(d));
    for (float v : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(buf, bits);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_tensor: cannot open " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("save_tensor: write failed for " + path);
}

TensorFile load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_tensor: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (buf.size() < 9 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw std::runtime_error("load_tensor: bad magic in " + path);
    if (p[4] != kVersion)
        throw std::runtime_error("load_tensor: unsupported version " + std::to_string(p[4]) +
                                 " in " + path);
    const std::uint32_t ndim = get_u32(p + 5);
    std::size_t off = 9;
    if (buf.size() < off + 4ull * ndim)
        throw std::runtime_error("load_tensor: truncated header in " + path);
    TensorFile f;
    f.shape.reserve(ndim);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        const std::uint32_t d = get_u32(p + off);
        off += 4;
        if (d == 0) throw std::runtime_error("load_tensor: zero dimension in " + path);
        f.shape.push_back(d);
        count *= d;
    }
    if (buf.size() != off + 4ull * count)
        throw std::runtime_error("load_tensor: payload size mismatch in " + path);
    f.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32(p + off + 4 * i);
        std::memcpy(&f.values[i], &bits, 4);
    }
    return f;
}

}  // namespace tksg
