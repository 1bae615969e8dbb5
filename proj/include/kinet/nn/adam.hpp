#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "kinet/nn/model.hpp"

namespace kinet::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-7;

    bool operator==(const AdamConfig&) const = default;
};

/// Moments are kept in single precision so they round-trip exactly through
/// the optimizer sidecar file.
struct AdamState {
    AdamConfig config;
    std::uint64_t t = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;

    AdamState() = default;
    template <typename T>
    AdamState(const Model<T>& model, AdamConfig cfg) : config(cfg) {
        for (auto a : model.arrays()) {
            m.emplace_back(a.size(), 0.0f);
            v.emplace_back(a.size(), 0.0f);
        }
    }
};

template <typename T>
void adam_step(AdamState& s, std::vector<std::span<T>> params, const Gradients& grads) {
    if (params.size() != grads.size() || params.size() != s.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient array count mismatch");
    s.t += 1;
    const AdamConfig& c = s.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.t));
    for (std::size_t a = 0; a < params.size(); ++a) {
        if (params[a].size() != grads[a].size() || params[a].size() != s.m[a].size())
            throw std::invalid_argument("adam_step: array " + std::to_string(a) + " size mismatch");
        for (std::size_t k = 0; k < params[a].size(); ++k) {
            const double g = grads[a][k];
            const double m = c.beta1 * s.m[a][k] + (1.0 - c.beta1) * g;
            const double v = c.beta2 * s.v[a][k] + (1.0 - c.beta2) * g * g;
            s.m[a][k] = static_cast<float>(m);
            s.v[a][k] = static_cast<float>(v);
            const double step = c.lr * (m / bc1) / (std::sqrt(v / bc2) + c.eps_hat);
            params[a][k] = static_cast<T>(static_cast<double>(params[a][k]) - step);
        }
    }
}

}  // namespace kinet::nn
