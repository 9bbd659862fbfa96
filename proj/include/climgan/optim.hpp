// SPDX-License-Identifier: Apache-2.0
//
// Adam with bias-corrected moments.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "climgan/nn.hpp"

namespace climgan {

struct AdamConfig {
    double lr = 0.0002;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <class T>
struct AdamState {
    AdamConfig config;
    std::uint64_t step_count = 0;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;

    AdamState() = default;
    AdamState(AdamConfig cfg, const NamedTensors<T>& params) : config(cfg) {
        for (const auto& [name, p] : params) {
            first_moment.emplace_back(p.numel(), T{});
            second_moment.emplace_back(p.numel(), T{});
        }
    }
};

/// One Adam update for every parameter, in place. All parameters must carry
/// a gradient.
template <class T>
void adam_step(NamedTensors<T>& params, AdamState<T>& state) {
    if (state.first_moment.size() != params.size())
        throw std::invalid_argument("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                                    " parameters, got " + std::to_string(params.size()));
    for (const auto& [name, p] : params)
        if (!p.has_grad()) throw std::invalid_argument("adam_step: parameter '" + name + "' has no gradient");

    const auto& c = state.config;
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k].second;
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        if (m.size() != p.numel())
            throw std::invalid_argument("adam_step: moment shape mismatch for '" + params[k].first + "'");
        auto theta = p.mutable_data();
        const auto g = p.grad();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = g[i];
            const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double m_hat = mi / correction1;
            const double v_hat = vi / correction2;
            theta[i] = static_cast<T>(theta[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon));
        }
    }
}

template <class T>
void zero_grad(NamedTensors<T>& params) {
    for (auto& [name, p] : params) p.zero_grad();
}

}  // namespace climgan
