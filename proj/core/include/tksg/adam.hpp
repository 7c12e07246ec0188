#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tksg/tensor.hpp"

namespace tksg {

template <typename T>
struct AdamConfig {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

// First/second moment estimates for one parameter group, plus the shared
// step counter. Moment shapes always match their parameters.
template <typename T>
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig<T> cfg) : cfg_(cfg) {}

    AdamConfig<T>& config() { return cfg_; }
    const AdamConfig<T>& config() const { return cfg_; }
    std::int64_t step_count() const { return step_; }

    void attach(const std::vector<Tensor<T>>& params) {
        params_ = params;
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].numel(), T(0));
            v_[i].assign(params[i].numel(), T(0));
        }
    }

    // One bias-corrected Adam update from the gradients currently stored on
    // the attached parameters. Missing gradients are treated as zero.
    void step() {
        ++step_;
        const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(step_));
        const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(step_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i].mutable_values();
            const auto& g = params_[i].grad();
            auto& m = m_[i];
            auto& v = v_[i];
            if (!g.empty() && g.size() != p.size())
                throw std::runtime_error("adam: gradient shape mismatch on parameter " +
                                         std::to_string(i));
            for (std::size_t j = 0; j < p.size(); ++j) {
                const T gj = g.empty() ? T(0) : g[j];
                m[j] = cfg_.beta1 * m[j] + (T(1) - cfg_.beta1) * gj;
                v[j] = cfg_.beta2 * v[j] + (T(1) - cfg_.beta2) * gj * gj;
                const T mhat = m[j] / bc1;
                const T vhat = v[j] / bc2;
                p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    std::size_t param_count() const { return params_.size(); }
    std::vector<T>& moment1(std::size_t i) { return m_[i]; }
    std::vector<T>& moment2(std::size_t i) { return v_[i]; }
    void set_step_count(std::int64_t s) { step_ = s; }

private:
    AdamConfig<T> cfg_;
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    std::int64_t step_ = 0;
};

}  // namespace tksg
