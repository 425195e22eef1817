#pragma once

#include <cmath>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "softgrad/nn.hpp"

namespace softgrad {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        // Zero is allowed as a degenerate no-op step (moments and counter still advance).
        if (!(learning_rate >= 0.0)) throw ConfigError("adam: learning rate must be >= 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must be in [0, 1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must be in [0, 1)");
        if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be > 0");
    }
};

enum class Direction { Ascend, Descend };

namespace detail {

inline void adam_update_array(double* param, double* m, double* v, const double* grad,
                              std::size_t n, const AdamConfig& cfg, double sign,
                              double bias1, double bias2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        param[i] += sign * cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

}  // namespace detail

/// One bias-corrected Adam update in the given direction. The step counter
/// lives with the parameters, so interleaved updates of several networks
/// keep independent schedules.
inline void adam_step(Mlp& net, const MlpGrad& grad, const AdamConfig& cfg, Direction dir) {
    cfg.validate();
    if (grad.layers.size() != net.layers.size())
        throw StructuralError("adam_step: gradient layer count mismatch");
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const GradLayer& gl = grad.layers[k];
        if (!gl.weight.same_shape(net.layers[k].weight) ||
            gl.bias.size() != net.layers[k].bias.size())
            throw StructuralError("adam_step: gradient shape mismatch at layer " +
                                  std::to_string(k));
        if (!all_finite(gl.weight) || !all_finite(gl.bias))
            throw NumericError("adam_step: non-finite gradient at layer " + std::to_string(k));
    }
    net.adam_step += 1;
    const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(net.adam_step));
    const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(net.adam_step));
    const double sign = dir == Direction::Ascend ? 1.0 : -1.0;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        Layer& l = net.layers[k];
        const GradLayer& gl = grad.layers[k];
        detail::adam_update_array(l.weight.data.data(), net.adam_m.layers[k].weight.data.data(),
                                  net.adam_v.layers[k].weight.data.data(), gl.weight.data.data(),
                                  l.weight.size(), cfg, sign, bias1, bias2);
        detail::adam_update_array(l.bias.data(), net.adam_m.layers[k].bias.data(),
                                  net.adam_v.layers[k].bias.data(), gl.bias.data(), l.bias.size(),
                                  cfg, sign, bias1, bias2);
    }
}

inline double squared_norm(const MlpGrad& g) {
    double acc = 0.0;
    for (const auto& l : g.layers) {
        for (double x : l.weight.data) acc += x * x;
        for (double x : l.bias) acc += x * x;
    }
    return acc;
}

/// Euclidean norm over the concatenation of all gradient sets.
inline double global_norm(std::span<const MlpGrad* const> grads) {
    double acc = 0.0;
    for (const MlpGrad* g : grads) acc += squared_norm(*g);
    return std::sqrt(acc);
}

inline double global_norm(std::initializer_list<const MlpGrad*> grads) {
    return global_norm(std::span<const MlpGrad* const>(grads.begin(), grads.size()));
}

inline double global_norm(const MlpGrad& g) { return std::sqrt(squared_norm(g)); }

/// Scales all gradient sets by max_norm / ||g|| when the global norm exceeds
/// max_norm; identity otherwise. Returns the pre-clip norm.
inline double clip_by_global_norm(std::span<MlpGrad* const> grads, double max_norm) {
    if (!(max_norm > 0.0)) throw ConfigError("clip_by_global_norm: max norm must be > 0");
    double acc = 0.0;
    for (MlpGrad* g : grads) acc += squared_norm(*g);
    const double norm = std::sqrt(acc);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (MlpGrad* g : grads) g->scale(scale);
    }
    return norm;
}

inline double clip_by_global_norm(MlpGrad& g, double max_norm) {
    MlpGrad* ptr = &g;
    return clip_by_global_norm(std::span<MlpGrad* const>(&ptr, 1), max_norm);
}

/// target <- alpha * online + (1 - alpha) * target, elementwise. Evaluated
/// as target += alpha * (online - target) so the realized step is exactly
/// proportional to the gap; the endpoints alpha = 0 and 1 are exact.
inline void polyak_update(Mlp& target, const Mlp& online, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("polyak_update: alpha must be in [0, 1]");
    if (target.layers.size() != online.layers.size())
        throw StructuralError("polyak_update: layer count mismatch");
    for (std::size_t k = 0; k < target.layers.size(); ++k) {
        Layer& t = target.layers[k];
        const Layer& o = online.layers[k];
        if (!t.weight.same_shape(o.weight) || t.bias.size() != o.bias.size())
            throw StructuralError("polyak_update: shape mismatch at layer " + std::to_string(k));
        if (alpha == 0.0) continue;
        if (alpha == 1.0) {
            t.weight.data = o.weight.data;
            t.bias = o.bias;
            continue;
        }
        for (std::size_t i = 0; i < t.weight.data.size(); ++i)
            t.weight.data[i] += alpha * (o.weight.data[i] - t.weight.data[i]);
        for (std::size_t i = 0; i < t.bias.size(); ++i)
            t.bias[i] += alpha * (o.bias[i] - t.bias[i]);
    }
}

}  // namespace softgrad
