#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace tksg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

[[noreturn]] inline void tensor_error(const std::string& op, const std::string& msg) {
    throw std::invalid_argument("tensor op '" + op + "': " + msg);
}

// One node of the computation record. Parents are held by shared_ptr; the
// backward rule pushes this node's gradient into its parents. Nodes never
// reference their children, so the graph is acyclic by construction.
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backward_rule;

    std::size_t numel() const { return values.size(); }
    bool is_leaf() const { return parents.empty(); }

    std::vector<T>& grad_buffer() {
        if (grad.empty()) grad.assign(values.size(), T(0));
        return grad;
    }
};

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(const Shape& shape) { return filled(shape, T(0)); }

    static Tensor filled(const Shape& shape, T value) {
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = shape;
        n->values.assign(shape_numel(shape), value);
        return Tensor(std::move(n));
    }

    static Tensor from(const Shape& shape, std::vector<T> values) {
        if (values.size() != shape_numel(shape))
            tensor_error("from", "value count " + std::to_string(values.size()) +
                                     " does not match shape " + shape_str(shape));
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = shape;
        n->values = std::move(values);
        return Tensor(std::move(n));
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    // Gaussian init, mean 0 / given stddev.
    static Tensor randn(const Shape& shape, std::mt19937_64& rng, T stddev) {
        std::normal_distribution<double> dist(0.0, 1.0);
        std::vector<T> v(shape_numel(shape));
        for (auto& x : v) x = static_cast<T>(dist(rng)) * stddev;
        return from(shape, std::move(v));
    }

    bool valid() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->values.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

    const std::vector<T>& values() const { return node_->values; }
    std::vector<T>& mutable_values() { return node_->values; }
    const std::vector<T>& grad() const { return node_->grad; }
    std::vector<T>& grad_buffer() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad.assign(node_->values.size(), T(0)); }

    T item() const {
        if (numel() != 1) tensor_error("item", "tensor " + shape_str(shape()) + " is not scalar");
        return node_->values[0];
    }

    T at(std::size_t r, std::size_t c) const {
        return node_->values[r * node_->shape[1] + c];
    }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool v = true) {
        node_->requires_grad = v;
        return *this;
    }

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <typename T>
void ensure_finite(const char* op, const std::vector<T>& v) {
    for (const T& x : v) {
        if (!std::isfinite(x))
            throw std::runtime_error(std::string("tensor op '") + op +
                                     "' produced a non-finite value");
    }
}

template <typename T>
std::shared_ptr<TensorNode<T>> make_node(const char* op, Shape shape, std::vector<T> values,
                                         std::vector<Tensor<T>> parents) {
    ensure_finite(op, values);
    auto n = std::make_shared<TensorNode<T>>();
    n->op = op;
    n->shape = std::move(shape);
    n->values = std::move(values);
    for (auto& p : parents) {
        if (p.node()->requires_grad) n->requires_grad = true;
        n->parents.push_back(p.node());
    }
    return n;
}

// C[m x n] += A[m x k] * B[k x n], row-major contiguous
template <typename T>
void matmul_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const T av = arow[l];
            if (av == T(0)) continue;
            const T* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward ops. Each op validates shapes, computes values, checks finiteness,
// and registers a backward rule when any input requires gradients.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        tensor_error("add", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    auto n = detail::make_node("add", a.shape(), std::move(out), {a, b});
    if (n->requires_grad) {
        auto pa = a.node(), pb = b.node();
        n->backward_rule = [pa, pb](TensorNode<T>& self) {
            if (pa->requires_grad) {
                auto& g = pa->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                auto& g = pb->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
        };
    }
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        tensor_error("sub", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    auto n = detail::make_node("sub", a.shape(), std::move(out), {a, b});
    if (n->requires_grad) {
        auto pa = a.node(), pb = b.node();
        n->backward_rule = [pa, pb](TensorNode<T>& self) {
            if (pa->requires_grad) {
                auto& g = pa->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                auto& g = pb->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
            }
        };
    }
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        tensor_error("mul", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    auto n = detail::make_node("mul", a.shape(), std::move(out), {a, b});
    if (n->requires_grad) {
        auto pa = a.node(), pb = b.node();
        n->backward_rule = [pa, pb](TensorNode<T>& self) {
            if (pa->requires_grad) {
                auto& g = pa->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->values[i];
            }
            if (pb->requires_grad) {
                auto& g = pb->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->values[i];
            }
        };
    }
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
    auto n = detail::make_node("scale", a.shape(), std::move(out), {a});
    if (n->requires_grad) {
        auto pa = a.node();
        n->backward_rule = [pa, s](TensorNode<T>& self) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
        };
    }
    return Tensor<T>(n);
}

// M[m x n] + row vector v[n], broadcast over rows. Realizes every "xW + b".
template <typename T>
Tensor<T> add_rowwise(const Tensor<T>& m, const Tensor<T>& v) {
    if (m.rank() != 2 || v.rank() != 1 || m.dim(1) != v.dim(0))
        tensor_error("add_rowwise", shape_str(m.shape()) + " + " + shape_str(v.shape()));
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    std::vector<T> out(m.numel());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out[r * cols + c] = m.values()[r * cols + c] + v.values()[c];
    auto n = detail::make_node("add_rowwise", m.shape(), std::move(out), {m, v});
    if (n->requires_grad) {
        auto pm = m.node(), pv = v.node();
        n->backward_rule = [pm, pv, rows, cols](TensorNode<T>& self) {
            if (pm->requires_grad) {
                auto& g = pm->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (pv->requires_grad) {
                auto& g = pv->grad_buffer();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
            }
        };
    }
    return Tensor<T>(n);
}

// Replicate row vector v[d] into rows[r x d].
template <typename T>
Tensor<T> broadcast_rows(const Tensor<T>& v, std::size_t rows) {
    if (v.rank() != 1) tensor_error("broadcast_rows", "expected vector, got " + shape_str(v.shape()));
    const std::size_t d = v.dim(0);
    std::vector<T> out(rows * d);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(v.values().begin(), v.values().end(), out.begin() + r * d);
    auto n = detail::make_node("broadcast_rows", {rows, d}, std::move(out), {v});
    if (n->requires_grad) {
        auto pv = v.node();
        n->backward_rule = [pv, rows, d](TensorNode<T>& self) {
            auto& g = pv->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c];
        };
    }
    return Tensor<T>(n);
}

// Matrix product; also accepts a rank-1 lhs as a row vector ([k]*[k x n] -> [n]).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const bool vec_lhs = a.rank() == 1;
    if ((a.rank() != 2 && a.rank() != 1) || b.rank() != 2)
        tensor_error("matmul", shape_str(a.shape()) + " * " + shape_str(b.shape()));
    const std::size_t m = vec_lhs ? 1 : a.dim(0);
    const std::size_t k = vec_lhs ? a.dim(0) : a.dim(1);
    if (k != b.dim(0))
        tensor_error("matmul", "inner dimensions disagree: " + shape_str(a.shape()) + " * " +
                                   shape_str(b.shape()));
    const std::size_t nn = b.dim(1);
    std::vector<T> out(m * nn, T(0));
    detail::matmul_acc(a.values().data(), b.values().data(), out.data(), m, k, nn);
    Shape oshape = vec_lhs ? Shape{nn} : Shape{m, nn};
    auto n = detail::make_node("matmul", std::move(oshape), std::move(out), {a, b});
    if (n->requires_grad) {
        auto pa = a.node(), pb = b.node();
        n->backward_rule = [pa, pb, m, k, nn](TensorNode<T>& self) {
            const T* dc = self.grad.data();
            if (pa->requires_grad) {
                // dA = dC * B^T
                auto& ga = pa->grad_buffer();
                const T* bv = pb->values.data();
                for (std::size_t i = 0; i < m; ++i) {
                    const T* dcrow = dc + i * nn;
                    T* garow = ga.data() + i * k;
                    for (std::size_t l = 0; l < k; ++l) {
                        const T* brow = bv + l * nn;
                        T s = 0;
                        for (std::size_t j = 0; j < nn; ++j) s += dcrow[j] * brow[j];
                        garow[l] += s;
                    }
                }
            }
            if (pb->requires_grad) {
                // dB = A^T * dC
                auto& gb = pb->grad_buffer();
                const T* av = pa->values.data();
                for (std::size_t i = 0; i < m; ++i) {
                    const T* arow = av + i * k;
                    const T* dcrow = dc + i * nn;
                    for (std::size_t l = 0; l < k; ++l) {
                        const T a_il = arow[l];
                        if (a_il == T(0)) continue;
                        T* gbrow = gb.data() + l * nn;
                        for (std::size_t j = 0; j < nn; ++j) gbrow[j] += a_il * dcrow[j];
                    }
                }
            }
        };
    }
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.rank() != 2) tensor_error("transpose", "expected matrix, got " + shape_str(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.values()[i * c + j];
    auto n = detail::make_node("transpose", {c, r}, std::move(out), {a});
    if (n->requires_grad) {
        auto pa = a.node();
        n->backward_rule = [pa, r, c](TensorNode<T>& self) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
        };
    }
    return Tensor<T>(n);
}

// Metadata-only reshape; element order is preserved.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
    if (shape_numel(shape) != a.numel())
        tensor_error("reshape", shape_str(a.shape()) + " -> " + shape_str(shape));
    auto n = detail::make_node("reshape", shape, a.values(), {a});
    if (n->requires_grad) {
        auto pa = a.node();
        n->backward_rule = [pa](TensorNode<T>& self) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        };
    }
    return Tensor<T>(n);
}

// Softmax along an axis of a 1-D or 2-D tensor, max-subtracted for stability.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1) {
    if (x.rank() != 1 && x.rank() != 2)
        tensor_error("softmax", "expected rank 1 or 2, got " + shape_str(x.shape()));
    int ax = axis < 0 ? static_cast<int>(x.rank()) + axis : axis;
    if (ax < 0 || ax >= static_cast<int>(x.rank())) tensor_error("softmax", "axis out of range");

    const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
    const std::size_t cols = x.rank() == 2 ? x.dim(1) : x.dim(0);
    const bool along_cols = (x.rank() == 1) || ax == 1;

    std::vector<T> out(x.numel());
    auto slice_softmax = [&](std::size_t start, std::size_t stride, std::size_t count) {
        T mx = x.values()[start];
        for (std::size_t i = 1; i < count; ++i) mx = std::max(mx, x.values()[start + i * stride]);
        T sum = 0;
        for (std::size_t i = 0; i < count; ++i) {
            T e = std::exp(x.values()[start + i * stride] - mx);
            out[start + i * stride] = e;
            sum += e;
        }
        for (std::size_t i = 0; i < count; ++i) out[start + i * stride] /= sum;
    };
    if (along_cols)
        for (std::size_t r = 0; r < rows; ++r) slice_softmax(r * cols, 1, cols);
    else
        for (std::size_t c = 0; c < cols; ++c) slice_softmax(c, cols, rows);

    auto n = detail::make_node("softmax", x.shape(), std::move(out), {x});
    if (n->requires_grad) {
        auto px = x.node();
        n->backward_rule = [px, rows, cols, along_cols](TensorNode<T>& self) {
            auto& g = px->grad_buffer();
            auto slice_back = [&](std::size_t start, std::size_t stride, std::size_t count) {
                T dot = 0;
                for (std::size_t i = 0; i < count; ++i)
                    dot += self.grad[start + i * stride] * self.values[start + i * stride];
                for (std::size_t i = 0; i < count; ++i) {
                    const std::size_t idx = start + i * stride;
                    g[idx] += self.values[idx] * (self.grad[idx] - dot);
                }
            };
            if (along_cols)
                for (std::size_t r = 0; r < rows; ++r) slice_back(r * cols, 1, cols);
            else
                for (std::size_t c = 0; c < cols; ++c) slice_back(c, cols, rows);
        };
    }
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x.values()[i];
        out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                           : std::exp(v) / (T(1) + std::exp(v));
    }
    auto n = detail::make_node("sigmoid", x.shape(), std::move(out), {x});
    if (n->requires_grad) {
        auto px = x.node();
        n->backward_rule = [px](TensorNode<T>& self) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T y = self.values[i];
                g[i] += self.grad[i] * y * (T(1) - y);
            }
        };
    }
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] > T(0) ? x.values()[i] : T(0);
    auto n = detail::make_node("relu", x.shape(), std::move(out), {x});
    if (n->requires_grad) {
        auto px = x.node();
        n->backward_rule = [px](TensorNode<T>& self) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (px->values[i] > T(0)) g[i] += self.grad[i];
        };
    }
    return Tensor<T>(n);
}

// Row-wise layer normalization over the last dimension with affine transform.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
    if (x.rank() != 1 && x.rank() != 2)
        tensor_error("layer_norm", "expected rank 1 or 2, got " + shape_str(x.shape()));
    const std::size_t d = x.shape().back();
    if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
        tensor_error("layer_norm", "gamma/beta must be vectors of length " + std::to_string(d));
    const std::size_t rows = x.numel() / d;

    std::vector<T> out(x.numel());
    std::vector<T> inv_std(rows), mean(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = x.values().data() + r * d;
        T mu = 0;
        for (std::size_t c = 0; c < d; ++c) mu += row[c];
        mu /= static_cast<T>(d);
        T var = 0;
        for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= static_cast<T>(d);
        const T is = T(1) / std::sqrt(var + eps);
        mean[r] = mu;
        inv_std[r] = is;
        for (std::size_t c = 0; c < d; ++c)
            out[r * d + c] = gamma.values()[c] * (row[c] - mu) * is + beta.values()[c];
    }
    auto n = detail::make_node("layer_norm", x.shape(), std::move(out), {x, gamma, beta});
    if (n->requires_grad) {
        auto px = x.node();
        auto pg = gamma.node();
        auto pb = beta.node();
        n->backward_rule = [px, pg, pb, rows, d, mean, inv_std](TensorNode<T>& self) {
            for (std::size_t r = 0; r < rows; ++r) {
                const T* row = px->values.data() + r * d;
                const T* dy = self.grad.data() + r * d;
                const T is = inv_std[r];
                const T mu = mean[r];
                if (pg->requires_grad) {
                    auto& gg = pg->grad_buffer();
                    for (std::size_t c = 0; c < d; ++c) gg[c] += dy[c] * (row[c] - mu) * is;
                }
                if (pb->requires_grad) {
                    auto& gb = pb->grad_buffer();
                    for (std::size_t c = 0; c < d; ++c) gb[c] += dy[c];
                }
                if (px->requires_grad) {
                    auto& gx = px->grad_buffer();
                    // dx = is * (a - mean(a) - xhat * mean(a*xhat)), a = gamma*dy
                    T mean_a = 0, mean_ax = 0;
                    for (std::size_t c = 0; c < d; ++c) {
                        const T a = pg->values[c] * dy[c];
                        const T xhat = (row[c] - mu) * is;
                        mean_a += a;
                        mean_ax += a * xhat;
                    }
                    mean_a /= static_cast<T>(d);
                    mean_ax /= static_cast<T>(d);
                    for (std::size_t c = 0; c < d; ++c) {
                        const T a = pg->values[c] * dy[c];
                        const T xhat = (row[c] - mu) * is;
                        gx[r * d + c] += is * (a - mean_a - xhat * mean_ax);
                    }
                }
            }
        };
    }
    return Tensor<T>(n);
}

// Column means of an [N x d] matrix -> vector [d].
template <typename T>
Tensor<T> mean_pool(const Tensor<T>& x) {
    if (x.rank() != 2 || x.dim(0) == 0)
        tensor_error("mean_pool", "expected nonempty matrix, got " + shape_str(x.shape()));
    const std::size_t rows = x.dim(0), d = x.dim(1);
    std::vector<T> out(d, T(0));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) out[c] += x.values()[r * d + c];
    for (std::size_t c = 0; c < d; ++c) out[c] /= static_cast<T>(rows);
    auto n = detail::make_node("mean_pool", {d}, std::move(out), {x});
    if (n->requires_grad) {
        auto px = x.node();
        n->backward_rule = [px, rows, d](TensorNode<T>& self) {
            auto& g = px->grad_buffer();
            const T inv = T(1) / static_cast<T>(rows);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < d; ++c) g[r * d + c] += self.grad[c] * inv;
        };
    }
    return Tensor<T>(n);
}

// Concatenation: [p x d] ++ [q x d] -> [(p+q) x d]; vectors concatenate along axis 0.
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
    Shape oshape;
    if (a.rank() == 1 && b.rank() == 1) {
        oshape = {a.dim(0) + b.dim(0)};
    } else if (a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1)) {
        oshape = {a.dim(0) + b.dim(0), a.dim(1)};
    } else {
        tensor_error("concat_rows", shape_str(a.shape()) + " ++ " + shape_str(b.shape()));
    }
    std::vector<T> out;
    out.reserve(a.numel() + b.numel());
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    auto n = detail::make_node("concat_rows", std::move(oshape), std::move(out), {a, b});
    if (n->requires_grad) {
        auto pa = a.node(), pb = b.node();
        const std::size_t na = a.numel();
        n->backward_rule = [pa, pb, na](TensorNode<T>& self) {
            if (pa->requires_grad) {
                auto& g = pa->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                auto& g = pb->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
            }
        };
    }
    return Tensor<T>(n);
}

// Column slice [r x (c1-c0)] of an [r x c] matrix.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t c0, std::size_t c1) {
    if (x.rank() != 2 || c0 >= c1 || c1 > x.dim(1))
        tensor_error("slice_cols", shape_str(x.shape()) + " cols [" + std::to_string(c0) + "," +
                                       std::to_string(c1) + ")");
    const std::size_t rows = x.dim(0), cols = x.dim(1), w = c1 - c0;
    std::vector<T> out(rows * w);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(x.values().begin() + r * cols + c0, x.values().begin() + r * cols + c1,
                  out.begin() + r * w);
    auto n = detail::make_node("slice_cols", {rows, w}, std::move(out), {x});
    if (n->requires_grad) {
        auto px = x.node();
        n->backward_rule = [px, rows, cols, c0, w](TensorNode<T>& self) {
            auto& g = px->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < w; ++j) g[r * cols + c0 + j] += self.grad[r * w + j];
        };
    }
    return Tensor<T>(n);
}

// Horizontal concatenation of equally-tall matrices.
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) tensor_error("concat_cols", "no inputs");
    const std::size_t rows = parts[0].dim(0);
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(0) != rows) tensor_error("concat_cols", "row counts disagree");
        total += p.dim(1);
    }
    std::vector<T> out(rows * total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(p.values().begin() + r * w, p.values().begin() + (r + 1) * w,
                      out.begin() + r * total + off);
        off += w;
    }
    auto n = detail::make_node("concat_cols", {rows, total}, std::move(out), parts);
    if (n->requires_grad) {
        std::vector<std::shared_ptr<TensorNode<T>>> ps;
        std::vector<std::size_t> widths;
        for (const auto& p : parts) {
            ps.push_back(p.node());
            widths.push_back(p.dim(1));
        }
        n->backward_rule = [ps, widths, rows, total](TensorNode<T>& self) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < ps.size(); ++k) {
                const std::size_t w = widths[k];
                if (ps[k]->requires_grad) {
                    auto& g = ps[k]->grad_buffer();
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < w; ++j)
                            g[r * w + j] += self.grad[r * total + off + j];
                }
                off += w;
            }
        };
    }
    return Tensor<T>(n);
}

// Gather rows of table[V x d] by 0-based indices; backward scatters additively.
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<std::size_t>& idx) {
    if (table.rank() != 2) tensor_error("embedding_lookup", "table must be a matrix");
    const std::size_t v = table.dim(0), d = table.dim(1);
    for (auto i : idx)
        if (i >= v)
            tensor_error("embedding_lookup",
                         "index " + std::to_string(i) + " out of range [0," + std::to_string(v) + ")");
    std::vector<T> out(idx.size() * d);
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(table.values().begin() + idx[r] * d, table.values().begin() + (idx[r] + 1) * d,
                  out.begin() + r * d);
    auto n = detail::make_node("embedding_lookup", {idx.size(), d}, std::move(out), {table});
    if (n->requires_grad) {
        auto pt = table.node();
        n->backward_rule = [pt, idx, d](TensorNode<T>& self) {
            auto& g = pt->grad_buffer();
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t c = 0; c < d; ++c) g[idx[r] * d + c] += self.grad[r * d + c];
        };
    }
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = 0;
    for (const T& v : x.values()) s += v;
    auto n = detail::make_node("sum", {1}, std::vector<T>{s}, {x});
    if (n->requires_grad) {
        auto px = x.node();
        n->backward_rule = [px](TensorNode<T>& self) {
            auto& g = px->grad_buffer();
            for (auto& v : g) v += self.grad[0];
        };
    }
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// Additive causal mask for self-attention scores [t x t]: entries above the
// diagonal get a large negative constant so their softmax weight underflows
// to exactly zero while every stored value stays finite.
template <typename T>
Tensor<T> add_causal_mask(const Tensor<T>& scores) {
    if (scores.rank() != 2 || scores.dim(0) != scores.dim(1))
        tensor_error("add_causal_mask", "expected square matrix, got " + shape_str(scores.shape()));
    const std::size_t t = scores.dim(0);
    const T neg = T(-1e9);
    std::vector<T> out = scores.values();
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = i + 1; j < t; ++j) out[i * t + j] = neg;
    auto n = detail::make_node("add_causal_mask", scores.shape(), std::move(out), {scores});
    if (n->requires_grad) {
        auto ps = scores.node();
        n->backward_rule = [ps, t](TensorNode<T>& self) {
            auto& g = ps->grad_buffer();
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j <= i; ++j) g[i * t + j] += self.grad[i * t + j];
        };
    }
    return Tensor<T>(n);
}

// Mean binary cross-entropy against constant 0/1 targets; probabilities are
// clamped to [eps, 1-eps] before the log (clamped region has zero slope).
template <typename T>
Tensor<T> bce_mean(const Tensor<T>& probs, const std::vector<T>& targets, T eps = T(1e-7)) {
    if (probs.numel() != targets.size())
        tensor_error("bce_mean", "probability/target count mismatch");
    const std::size_t n_el = targets.size();
    std::vector<bool> clamped(n_el, false);
    T loss = 0;
    for (std::size_t i = 0; i < n_el; ++i) {
        T p = probs.values()[i];
        if (p < eps || p > T(1) - eps) {
            clamped[i] = true;
            p = std::clamp(p, eps, T(1) - eps);
        }
        loss -= targets[i] * std::log(p) + (T(1) - targets[i]) * std::log(T(1) - p);
    }
    loss /= static_cast<T>(n_el);
    auto n = detail::make_node("bce_mean", {1}, std::vector<T>{loss}, {probs});
    if (n->requires_grad) {
        auto pp = probs.node();
        n->backward_rule = [pp, targets, clamped, n_el](TensorNode<T>& self) {
            auto& g = pp->grad_buffer();
            const T up = self.grad[0] / static_cast<T>(n_el);
            for (std::size_t i = 0; i < n_el; ++i) {
                if (clamped[i]) continue;
                const T p = pp->values[i];
                g[i] += up * (-targets[i] / p + (T(1) - targets[i]) / (T(1) - p));
            }
        };
    }
    return Tensor<T>(n);
}

// Mean negative log-likelihood of one target id per row of a probability
// matrix [t x V]. Rows are expected to sum to 1 (softmax output).
template <typename T>
Tensor<T> nll_rows(const Tensor<T>& probs, const std::vector<std::size_t>& ids, T tiny = T(1e-12)) {
    if (probs.rank() != 2 || probs.dim(0) != ids.size() || ids.empty())
        tensor_error("nll_rows", "expected [t x V] probabilities with t=" + std::to_string(ids.size()));
    const std::size_t t = ids.size(), v = probs.dim(1);
    for (auto id : ids)
        if (id >= v) tensor_error("nll_rows", "target id out of range");
    std::vector<bool> clamped(t, false);
    T loss = 0;
    for (std::size_t r = 0; r < t; ++r) {
        T p = probs.values()[r * v + ids[r]];
        if (p < tiny) {
            clamped[r] = true;
            p = tiny;
        }
        loss -= std::log(p);
    }
    loss /= static_cast<T>(t);
    auto n = detail::make_node("nll_rows", {1}, std::vector<T>{loss}, {probs});
    if (n->requires_grad) {
        auto pp = probs.node();
        n->backward_rule = [pp, ids, clamped, t, v](TensorNode<T>& self) {
            auto& g = pp->grad_buffer();
            const T up = self.grad[0] / static_cast<T>(t);
            for (std::size_t r = 0; r < t; ++r) {
                if (clamped[r]) continue;
                g[r * v + ids[r]] -= up / pp->values[r * v + ids[r]];
            }
        };
    }
    return Tensor<T>(n);
}

// Inverted dropout with an explicit, caller-seeded RNG.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, std::mt19937_64& rng) {
    if (rate <= T(0)) return x;
    if (rate >= T(1)) tensor_error("dropout", "rate must be < 1");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const T keep = T(1) - rate;
    auto mask = std::make_shared<std::vector<T>>(x.numel());
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = u(rng) < static_cast<double>(rate) ? T(0) : T(1) / keep;
        out[i] = x.values()[i] * (*mask)[i];
    }
    auto n = detail::make_node("dropout", x.shape(), std::move(out), {x});
    if (n->requires_grad) {
        auto px = x.node();
        n->backward_rule = [px, mask](TensorNode<T>& self) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
        };
    }
    return Tensor<T>(n);
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

// Topologically ordered op nodes reachable from a root; reverse traversal
// visits each node exactly once and accumulates gradients additively.
template <typename T>
struct ComputationRecord {
    std::vector<std::shared_ptr<TensorNode<T>>> order;  // parents before children

    static ComputationRecord build(const Tensor<T>& root) {
        ComputationRecord rec;
        std::unordered_set<const TensorNode<T>*> seen;
        // iterative post-order DFS; the graph can be deeper than the stack allows
        std::vector<std::pair<std::shared_ptr<TensorNode<T>>, std::size_t>> stack;
        stack.emplace_back(root.node(), 0);
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next == 0 && seen.count(node.get())) {
                stack.pop_back();
                continue;
            }
            if (next < node->parents.size()) {
                auto child = node->parents[next++];
                if (!seen.count(child.get())) stack.emplace_back(child, 0);
            } else {
                if (!seen.count(node.get())) {
                    seen.insert(node.get());
                    rec.order.push_back(node);
                }
                stack.pop_back();
            }
        }
        return rec;
    }
};

// Reverse-mode sweep from a scalar loss. Gradients of interior nodes are
// reset per call; leaf gradients accumulate across calls.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1)
        tensor_error("backward", "loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.node()->requires_grad) return;
    auto rec = ComputationRecord<T>::build(loss);
    for (auto& node : rec.order)
        if (!node->is_leaf()) node->grad.assign(node->values.size(), T(0));
    loss.node()->grad_buffer()[0] += T(1);
    for (auto it = rec.order.rbegin(); it != rec.order.rend(); ++it) {
        auto& node = **it;
        if (node.backward_rule && node.requires_grad) node.backward_rule(node);
    }
}

}  // namespace tksg
