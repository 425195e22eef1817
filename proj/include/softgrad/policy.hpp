#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "softgrad/checkpoint.hpp"
#include "softgrad/nn.hpp"
#include "softgrad/optim.hpp"
#include "softgrad/rng.hpp"

namespace softgrad {

inline constexpr double kLogTwoPi = 1.8378770664093454836;  // ln(2*pi)

/// Diagonal Gaussian actor. A shared ReLU trunk feeds two linear heads:
/// identity for the mean, sigmoid for the standard deviation, so emitted
/// stddevs live in (0, 1] and are floored at std_floor.
struct GaussianPolicy {
    Mlp trunk;
    Mlp mean_head;
    Mlp std_head;
    double std_floor = 1e-3;

    std::size_t state_dim() const { return trunk.in_dim(); }
    std::size_t action_dim() const { return mean_head.out_dim(); }
};

struct ActionSample {
    Vector action;
    double log_prob = 0.0;
};

struct PolicyGrad {
    MlpGrad trunk;
    MlpGrad mean_head;
    MlpGrad std_head;

    void scale(double s) {
        trunk.scale(s);
        mean_head.scale(s);
        std_head.scale(s);
    }

    void add_scaled(const PolicyGrad& other, double s) {
        trunk.add_scaled(other.trunk, s);
        mean_head.add_scaled(other.mean_head, s);
        std_head.add_scaled(other.std_head, s);
    }
};

inline PolicyGrad grad_like(const GaussianPolicy& p) {
    return {grad_like(p.trunk), grad_like(p.mean_head), grad_like(p.std_head)};
}

inline double global_norm(const PolicyGrad& g) {
    return global_norm({&g.trunk, &g.mean_head, &g.std_head});
}

inline double clip_by_global_norm(PolicyGrad& g, double max_norm) {
    MlpGrad* parts[] = {&g.trunk, &g.mean_head, &g.std_head};
    return clip_by_global_norm(std::span<MlpGrad* const>(parts, 3), max_norm);
}

inline GaussianPolicy make_policy(std::size_t state_dim, const std::vector<std::size_t>& hidden,
                                  std::size_t action_dim, double std_floor, Rng& rng) {
    if (hidden.empty()) throw StructuralError("make_policy: need at least one hidden layer");
    if (!(std_floor > 0.0)) throw ConfigError("make_policy: std floor must be > 0");
    std::vector<std::size_t> trunk_dims{state_dim};
    trunk_dims.insert(trunk_dims.end(), hidden.begin(), hidden.end());
    GaussianPolicy p;
    p.trunk = make_mlp(trunk_dims, Activation::Relu, Activation::Relu);
    p.mean_head = make_mlp({hidden.back(), action_dim}, Activation::Identity, Activation::Identity);
    p.std_head = make_mlp({hidden.back(), action_dim}, Activation::Sigmoid, Activation::Sigmoid);
    p.std_floor = std_floor;
    init_mlp(p.trunk, rng);
    init_mlp(p.mean_head, rng);
    init_mlp(p.std_head, rng);
    return p;
}

struct PolicyTape {
    Tape trunk;
    Tape mean_head;
    Tape std_head;
};

struct PolicyEval {
    Vector mean;
    Vector stddev;  // floored
    PolicyTape tape;
};

inline PolicyEval policy_forward(const GaussianPolicy& p, const Vector& state) {
    PolicyEval ev;
    ev.tape.trunk = forward(p.trunk, state);
    ev.tape.mean_head = forward(p.mean_head, ev.tape.trunk.output());
    ev.tape.std_head = forward(p.std_head, ev.tape.trunk.output());
    ev.mean = ev.tape.mean_head.output();
    ev.stddev = ev.tape.std_head.output();
    for (auto& s : ev.stddev) s = std::max(s, p.std_floor);
    return ev;
}

inline double log_prob_from(const Vector& mean, const Vector& stddev, const Vector& action) {
    double lp = 0.0;
    for (std::size_t d = 0; d < mean.size(); ++d) {
        const double z = (action[d] - mean[d]) / stddev[d];
        lp += -0.5 * kLogTwoPi - std::log(stddev[d]) - 0.5 * z * z;
    }
    return lp;
}

inline double entropy_from(const Vector& stddev) {
    double h = 0.0;
    for (double s : stddev) h += 0.5 * (kLogTwoPi + 1.0) + std::log(s);
    return h;
}

inline double log_prob(const GaussianPolicy& p, const Vector& state, const Vector& action) {
    const PolicyEval ev = policy_forward(p, state);
    return log_prob_from(ev.mean, ev.stddev, action);
}

inline double entropy(const GaussianPolicy& p, const Vector& state) {
    return entropy_from(policy_forward(p, state).stddev);
}

/// M independent draws a = mean + stddev * z with their log-densities.
inline std::vector<ActionSample> sample(const GaussianPolicy& p, const Vector& state,
                                        std::size_t count, Rng& rng) {
    if (count < 1) throw PreconditionError("sample: need at least one draw");
    const PolicyEval ev = policy_forward(p, state);
    std::vector<ActionSample> out;
    out.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        ActionSample s;
        s.action.resize(ev.mean.size());
        for (std::size_t d = 0; d < ev.mean.size(); ++d)
            s.action[d] = ev.mean[d] + ev.stddev[d] * rng.normal();
        s.log_prob = log_prob_from(ev.mean, ev.stddev, s.action);
        out.push_back(std::move(s));
    }
    return out;
}

/// Backpropagates cotangents on (mean, floored stddev) through both heads and
/// the shared trunk, adding into `into`. Where the floor is active the stddev
/// path contributes nothing (subgradient 0, same convention as ReLU at its
/// clamp).
inline void policy_backward_accumulate(const GaussianPolicy& p, const PolicyTape& tape,
                                       const Vector& cot_mean, const Vector& cot_std,
                                       PolicyGrad& into) {
    Vector cot_raw = cot_std;
    const Vector& raw_std = tape.std_head.output();
    for (std::size_t d = 0; d < cot_raw.size(); ++d)
        if (raw_std[d] <= p.std_floor) cot_raw[d] = 0.0;
    Vector mean_cot = backward_accumulate(p.mean_head, tape.mean_head, cot_mean, into.mean_head);
    const Vector std_cot = backward_accumulate(p.std_head, tape.std_head, cot_raw, into.std_head);
    for (std::size_t i = 0; i < mean_cot.size(); ++i) mean_cot[i] += std_cot[i];
    backward_accumulate(p.trunk, tape.trunk, mean_cot, into.trunk);
}

inline PolicyGrad policy_backward(const GaussianPolicy& p, const PolicyTape& tape,
                                  const Vector& cot_mean, const Vector& cot_std) {
    PolicyGrad grad = grad_like(p);
    policy_backward_accumulate(p, tape, cot_mean, cot_std, grad);
    return grad;
}

/// d log N(a; mean, std) / d mean and / d std, elementwise.
inline void log_prob_cotangents(const Vector& mean, const Vector& stddev, const Vector& action,
                                Vector& cot_mean, Vector& cot_std) {
    cot_mean.resize(mean.size());
    cot_std.resize(mean.size());
    for (std::size_t d = 0; d < mean.size(); ++d) {
        const double diff = action[d] - mean[d];
        const double s = stddev[d];
        cot_mean[d] = diff / (s * s);
        cot_std[d] = -1.0 / s + diff * diff / (s * s * s);
    }
}

/// Exact gradient of log_prob(state, action) with respect to all policy
/// parameters, including the stddev head's dependence.
inline PolicyGrad score_grad(const GaussianPolicy& p, const Vector& state, const Vector& action) {
    const PolicyEval ev = policy_forward(p, state);
    Vector cot_mean, cot_std;
    log_prob_cotangents(ev.mean, ev.stddev, action, cot_mean, cot_std);
    return policy_backward(p, ev.tape, cot_mean, cot_std);
}

inline Vector flatten_params(const GaussianPolicy& p) {
    Vector flat = flatten(p.trunk);
    const Vector m = flatten(p.mean_head);
    const Vector s = flatten(p.std_head);
    flat.insert(flat.end(), m.begin(), m.end());
    flat.insert(flat.end(), s.begin(), s.end());
    return flat;
}

inline void unflatten_params(GaussianPolicy& p, const Vector& flat) {
    const std::size_t nt = param_count(p.trunk);
    const std::size_t nm = param_count(p.mean_head);
    const std::size_t ns = param_count(p.std_head);
    if (flat.size() != nt + nm + ns) throw StructuralError("unflatten_params: size mismatch");
    unflatten(p.trunk, Vector(flat.begin(), flat.begin() + nt));
    unflatten(p.mean_head, Vector(flat.begin() + nt, flat.begin() + nt + nm));
    unflatten(p.std_head, Vector(flat.begin() + nt + nm, flat.end()));
}

inline Vector flatten_grad(const PolicyGrad& g) {
    Vector flat = flatten(g.trunk);
    const Vector m = flatten(g.mean_head);
    const Vector s = flatten(g.std_head);
    flat.insert(flat.end(), m.begin(), m.end());
    flat.insert(flat.end(), s.begin(), s.end());
    return flat;
}

inline void adam_step(GaussianPolicy& p, const PolicyGrad& grad, const AdamConfig& cfg,
                      Direction dir) {
    adam_step(p.trunk, grad.trunk, cfg, dir);
    adam_step(p.mean_head, grad.mean_head, cfg, dir);
    adam_step(p.std_head, grad.std_head, cfg, dir);
}

inline void polyak_update(GaussianPolicy& target, const GaussianPolicy& online, double alpha) {
    polyak_update(target.trunk, online.trunk, alpha);
    polyak_update(target.mean_head, online.mean_head, alpha);
    polyak_update(target.std_head, online.std_head, alpha);
}

inline void write_policy(std::ostream& out, const GaussianPolicy& p) {
    out << "policy " << p.action_dim() << ' ' << fmt17(p.std_floor) << '\n';
    write_mlp(out, p.trunk);
    write_mlp(out, p.mean_head);
    write_mlp(out, p.std_head);
}

inline GaussianPolicy read_policy(std::istream& in) {
    detail::expect_token(in, "policy");
    const std::size_t action_dim = detail::next_size(in, "policy action dim");
    GaussianPolicy p;
    p.std_floor = detail::next_double(in, "policy std floor");
    p.trunk = read_mlp(in);
    p.mean_head = read_mlp(in);
    p.std_head = read_mlp(in);
    if (p.mean_head.out_dim() != action_dim || p.std_head.out_dim() != action_dim)
        throw StructuralError("checkpoint: policy head dims do not match action dim");
    return p;
}

}  // namespace softgrad
