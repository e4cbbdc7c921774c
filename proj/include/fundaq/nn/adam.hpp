#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundaq/nn/resnet.hpp"

namespace fundaq::nn {

struct AdamSettings {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct NonFiniteGradient : std::runtime_error {
    explicit NonFiniteGradient(const std::string& name)
        : std::runtime_error("non-finite gradient in parameter '" + name + "'"), parameter(name) {}
    std::string parameter;
};

/// First and second moments per parameter array, in visiting order.
template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::uint64_t t = 0;
    AdamSettings settings;
};

/// One bias-corrected Adam update over every parameter of the network.
/// Gradients are checked before any parameter is touched.
template <typename T>
void adam_step(ResNet<T>& net, AdamState<T>& state, double lr) {
    std::size_t idx = 0;
    net.for_each_param([&](const std::string& name, Param<T>& p) {
        if (!p.grad.all_finite()) throw NonFiniteGradient(name);
        if (state.m.size() <= idx) {
            state.m.emplace_back(p.value.shape());
            state.v.emplace_back(p.value.shape());
        } else if (state.m[idx].shape() != p.value.shape()) {
            throw ShapeError("adam state shape mismatch for '" + name + "'");
        }
        ++idx;
    });

    ++state.t;
    const auto& s = state.settings;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.t));
    const T b1 = static_cast<T>(s.beta1), b2 = static_cast<T>(s.beta2);
    idx = 0;
    net.for_each_param([&](const std::string&, Param<T>& p) {
        auto& m = state.m[idx];
        auto& v = state.v[idx];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const T g = p.grad[i];
            m[i] = b1 * m[i] + (T{1} - b1) * g;
            v[i] = b2 * v[i] + (T{1} - b2) * g * g;
            const T m_hat = m[i] / static_cast<T>(c1);
            const T v_hat = v[i] / static_cast<T>(c2);
            p.value[i] -= static_cast<T>(lr) * m_hat / (std::sqrt(v_hat) + static_cast<T>(s.eps));
        }
        ++idx;
    });
}

}  // namespace fundaq::nn
