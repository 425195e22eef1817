#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softgrad/matrix.hpp"
#include "softgrad/rng.hpp"

namespace softgrad {

enum class Activation { Identity, Relu, Sigmoid };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::Relu;
    if (name == "sigmoid") return Activation::Sigmoid;
    throw StructuralError("unknown activation: " + name);
}

struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
    Activation act = Activation::Identity;

    std::size_t in_dim() const { return weight.cols; }
    std::size_t out_dim() const { return weight.rows; }
};

/// Parameter-shaped container: gradients and Adam moments both use it.
struct GradLayer {
    Matrix weight;
    Vector bias;
};

struct MlpGrad {
    std::vector<GradLayer> layers;

    void scale(double s) {
        for (auto& l : layers) {
            for (auto& x : l.weight.data) x *= s;
            for (auto& x : l.bias) x *= s;
        }
    }

    void add_scaled(const MlpGrad& other, double s) {
        for (std::size_t k = 0; k < layers.size(); ++k) {
            for (std::size_t i = 0; i < layers[k].weight.data.size(); ++i)
                layers[k].weight.data[i] += s * other.layers[k].weight.data[i];
            for (std::size_t i = 0; i < layers[k].bias.size(); ++i)
                layers[k].bias[i] += s * other.layers[k].bias[i];
        }
    }
};

/// Dense feed-forward network with per-layer activations, paired with its
/// Adam moment estimates so a parameter set is self-contained in checkpoints.
struct Mlp {
    std::vector<Layer> layers;
    MlpGrad adam_m;
    MlpGrad adam_v;
    std::int64_t adam_step = 0;

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }
};

inline MlpGrad grad_like(const Mlp& net) {
    MlpGrad g;
    g.layers.reserve(net.layers.size());
    for (const auto& l : net.layers)
        g.layers.push_back({Matrix(l.weight.rows, l.weight.cols), Vector(l.bias.size(), 0.0)});
    return g;
}

inline Mlp make_mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1)
        throw StructuralError("make_mlp: need one activation per layer");
    Mlp net;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k)
        net.layers.push_back({Matrix(dims[k + 1], dims[k]), Vector(dims[k + 1], 0.0), acts[k]});
    net.adam_m = grad_like(net);
    net.adam_v = grad_like(net);
    return net;
}

inline Mlp make_mlp(const std::vector<std::size_t>& dims, Activation hidden, Activation output) {
    std::vector<Activation> acts(dims.size() - 1, hidden);
    acts.back() = output;
    return make_mlp(dims, acts);
}

/// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
inline void init_mlp(Mlp& net, Rng& rng) {
    for (auto& l : net.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim()));
        for (auto& w : l.weight.data) w = rng.uniform(-bound, bound);
        for (auto& b : l.bias) b = 0.0;
    }
}

inline std::size_t param_count(const Mlp& net) {
    std::size_t n = 0;
    for (const auto& l : net.layers) n += l.weight.size() + l.bias.size();
    return n;
}

/// Row-major weights then bias, layer by layer.
inline Vector flatten(const Mlp& net) {
    Vector flat;
    flat.reserve(param_count(net));
    for (const auto& l : net.layers) {
        flat.insert(flat.end(), l.weight.data.begin(), l.weight.data.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

inline Vector flatten(const MlpGrad& g) {
    Vector flat;
    for (const auto& l : g.layers) {
        flat.insert(flat.end(), l.weight.data.begin(), l.weight.data.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

inline void unflatten(Mlp& net, const Vector& flat) {
    if (flat.size() != param_count(net))
        throw StructuralError("unflatten: got " + std::to_string(flat.size()) + " values, expected " +
                              std::to_string(param_count(net)));
    std::size_t pos = 0;
    for (auto& l : net.layers) {
        for (auto& w : l.weight.data) w = flat[pos++];
        for (auto& b : l.bias) b = flat[pos++];
    }
}

inline double apply_activation(Activation a, double x) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    }
    return x;
}

/// Derivative expressed through the post-activation value. ReLU uses
/// subgradient 0 at the clamp point.
inline double activation_slope(Activation a, double post) {
    switch (a) {
        case Activation::Identity: return 1.0;
        case Activation::Relu: return post > 0.0 ? 1.0 : 0.0;
        case Activation::Sigmoid: return post * (1.0 - post);
    }
    return 1.0;
}

/// Activation record: acts[0] is the input, acts[k+1] the output of layer k.
struct Tape {
    std::vector<Vector> acts;
    const Vector& output() const { return acts.back(); }
};

inline Tape forward(const Mlp& net, const Vector& input) {
    if (input.size() != net.in_dim())
        throw StructuralError("forward: input length " + std::to_string(input.size()) +
                              " does not match network input dim " + std::to_string(net.in_dim()));
    Tape tape;
    tape.acts.reserve(net.layers.size() + 1);
    tape.acts.push_back(input);
    for (const auto& l : net.layers) {
        Vector z = matvec(l.weight, tape.acts.back());
        for (std::size_t r = 0; r < z.size(); ++r) z[r] = apply_activation(l.act, z[r] + l.bias[r]);
        tape.acts.push_back(std::move(z));
    }
    return tape;
}

inline void check_tape(const Mlp& net, const Tape& tape) {
    if (tape.acts.size() != net.layers.size() + 1)
        throw StructuralError("backward: tape does not match network depth");
    for (std::size_t k = 0; k < net.layers.size(); ++k)
        if (tape.acts[k].size() != net.layers[k].in_dim() ||
            tape.acts[k + 1].size() != net.layers[k].out_dim())
            throw StructuralError("backward: tape does not match layer " + std::to_string(k) +
                                  " shape");
}

struct BackwardResult {
    MlpGrad grad;
    Vector input_cotangent;
};

/// Adds the exact gradient of <output, cotangent> into grad_into and returns
/// the input cotangent. The accumulate form lets batch loops reuse storage.
inline Vector backward_accumulate(const Mlp& net, const Tape& tape, const Vector& cotangent,
                                  MlpGrad& grad_into) {
    check_tape(net, tape);
    if (cotangent.size() != net.out_dim())
        throw StructuralError("backward: cotangent length does not match output dim");
    Vector cot = cotangent;
    for (std::size_t k = net.layers.size(); k-- > 0;) {
        const Layer& l = net.layers[k];
        const Vector& x = tape.acts[k];
        const Vector& post = tape.acts[k + 1];
        Vector delta(l.out_dim());
        for (std::size_t r = 0; r < delta.size(); ++r)
            delta[r] = cot[r] * activation_slope(l.act, post[r]);
        GradLayer& gl = grad_into.layers[k];
        for (std::size_t r = 0; r < l.out_dim(); ++r) {
            double* grow = gl.weight.data.data() + r * l.in_dim();
            const double d = delta[r];
            for (std::size_t c = 0; c < l.in_dim(); ++c) grow[c] += d * x[c];
            gl.bias[r] += d;
        }
        cot = matvec_transposed(l.weight, delta);
    }
    return cot;
}

/// Exact gradient of <output, cotangent> with respect to all parameters.
inline BackwardResult backward(const Mlp& net, const Tape& tape, const Vector& cotangent) {
    BackwardResult res{grad_like(net), {}};
    res.input_cotangent = backward_accumulate(net, tape, cotangent, res.grad);
    return res;
}

/// Batched activation record; acts[k] holds one row per batch element.
struct BatchTape {
    std::vector<Matrix> acts;
    const Matrix& output() const { return acts.back(); }
};

inline BatchTape forward_batch(const Mlp& net, const Matrix& inputs) {
    if (inputs.cols != net.in_dim())
        throw StructuralError("forward_batch: input width does not match network input dim");
    BatchTape tape;
    tape.acts.reserve(net.layers.size() + 1);
    tape.acts.push_back(inputs);
    for (const auto& l : net.layers) {
        Matrix z = matmul_batch(tape.acts.back(), l.weight);
        for (std::size_t b = 0; b < z.rows; ++b) {
            double* row = z.data.data() + b * z.cols;
            for (std::size_t r = 0; r < z.cols; ++r)
                row[r] = apply_activation(l.act, row[r] + l.bias[r]);
        }
        tape.acts.push_back(std::move(z));
    }
    return tape;
}

struct BatchBackwardResult {
    MlpGrad grad;  // summed over batch rows
    Matrix input_cotangents;
};

inline BatchBackwardResult backward_batch(const Mlp& net, const BatchTape& tape,
                                          const Matrix& cotangents) {
    if (tape.acts.size() != net.layers.size() + 1)
        throw StructuralError("backward_batch: tape does not match network depth");
    if (cotangents.cols != net.out_dim() || cotangents.rows != tape.acts.front().rows)
        throw StructuralError("backward_batch: cotangent shape mismatch");
    BatchBackwardResult res{grad_like(net), {}};
    Matrix cot = cotangents;
    for (std::size_t k = net.layers.size(); k-- > 0;) {
        const Layer& l = net.layers[k];
        const Matrix& x = tape.acts[k];
        const Matrix& post = tape.acts[k + 1];
        Matrix delta(cot.rows, l.out_dim());
        for (std::size_t b = 0; b < cot.rows; ++b)
            for (std::size_t r = 0; r < l.out_dim(); ++r)
                delta(b, r) = cot(b, r) * activation_slope(l.act, post(b, r));
        GradLayer& gl = res.grad.layers[k];
        for (std::size_t b = 0; b < delta.rows; ++b) {
            const double* xrow = x.data.data() + b * x.cols;
            const double* drow = delta.data.data() + b * delta.cols;
            for (std::size_t r = 0; r < l.out_dim(); ++r) {
                double* grow = gl.weight.data.data() + r * l.in_dim();
                const double d = drow[r];
                for (std::size_t c = 0; c < l.in_dim(); ++c) grow[c] += d * xrow[c];
                gl.bias[r] += d;
            }
        }
        // cot_prev = delta * W
        Matrix prev(delta.rows, l.in_dim());
        for (std::size_t b = 0; b < delta.rows; ++b) {
            const double* drow = delta.data.data() + b * delta.cols;
            double* prow = prev.data.data() + b * prev.cols;
            for (std::size_t r = 0; r < l.out_dim(); ++r) {
                const double d = drow[r];
                const double* wrow = l.weight.data.data() + r * l.in_dim();
                for (std::size_t c = 0; c < l.in_dim(); ++c) prow[c] += d * wrow[c];
            }
        }
        cot = std::move(prev);
    }
    res.input_cotangents = std::move(cot);
    return res;
}

}  // namespace softgrad
