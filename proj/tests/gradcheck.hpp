#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tksg/tensor.hpp"

namespace tksg::testing {

struct GradCheckReport {
    double max_err = 0.0;       // |analytic - numeric| / max(1, |analytic|, |numeric|)
    std::size_t checked = 0;
    std::string worst;          // where the worst error occurred

    bool ok(double tol) const { return checked > 0 && max_err <= tol; }
};

// Central finite differences against reverse-mode gradients. loss_fn must
// rebuild the graph from the current parameter values on every call.
template <typename T>
GradCheckReport gradcheck(std::vector<Tensor<T>> params,
                          const std::function<Tensor<T>()>& loss_fn, double h = 1e-5) {
    for (auto& p : params) p.zero_grad();
    Tensor<T> loss = loss_fn();
    backward(loss);

    std::vector<std::vector<T>> analytic;
    for (auto& p : params) {
        analytic.push_back(p.grad().empty() ? std::vector<T>(p.numel(), T(0)) : p.grad());
    }

    GradCheckReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& values = params[pi].mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const T saved = values[i];
            values[i] = saved + static_cast<T>(h);
            const double fp = static_cast<double>(loss_fn().item());
            values[i] = saved - static_cast<T>(h);
            const double fm = static_cast<double>(loss_fn().item());
            values[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = static_cast<double>(analytic[pi][i]);
            const double err = std::abs(a - numeric) /
                               std::max({1.0, std::abs(a), std::abs(numeric)});
            ++rep.checked;
            if (err > rep.max_err) {
                rep.max_err = err;
                rep.worst = "param " + std::to_string(pi) + " elem " + std::to_string(i) +
                            " analytic=" + std::to_string(a) +
                            " numeric=" + std::to_string(numeric);
            }
        }
    }
    return rep;
}

}  // namespace tksg::testing
