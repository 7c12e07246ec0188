#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tksg/tensor.hpp"

namespace tksg {

// On-disk tensor container: magic "TKSG", u8 version=1, u32 ndim,
// ndim x u32 dims, then row-major little-endian f32 payload.
struct TensorFile {
    Shape shape;
    std::vector<float> values;

    std::size_t numel() const { return values.size(); }
};

void save_tensor(const std::string& path, const Shape& shape, const std::vector<float>& values);
TensorFile load_tensor(const std::string& path);

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
    std::vector<float> v(t.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(t.values()[i]);
    save_tensor(path, t.shape(), v);
}

template <typename T>
Tensor<T> load_tensor_as(const std::string& path) {
    TensorFile f = load_tensor(path);
    std::vector<T> v(f.values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(f.values[i]);
    return Tensor<T>::from(f.shape, std::move(v));
}

}  // namespace tksg
