#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "softgrad/checkpoint.hpp"
#include "softgrad/error.hpp"
#include "softgrad/rng.hpp"

namespace softgrad::tabular {

/// Finite MDP with dense transition tensor P[s][a][s'] and reward matrix
/// R[s][a]. Templated on the scalar so verification can run the same
/// computations in extended precision.
template <typename Real = double>
struct Mdp {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    std::vector<Real> transition;  // [S*A*S], row P(s,a,.) sums to 1
    std::vector<Real> reward;      // [S*A]
    Real gamma = Real(0.9);
    std::vector<Real> start;       // [S], sums to 1

    Real p(std::size_t s, std::size_t a, std::size_t s2) const {
        return transition[(s * num_actions + a) * num_states + s2];
    }
    Real& p(std::size_t s, std::size_t a, std::size_t s2) {
        return transition[(s * num_actions + a) * num_states + s2];
    }
    Real r(std::size_t s, std::size_t a) const { return reward[s * num_actions + a]; }
    Real& r(std::size_t s, std::size_t a) { return reward[s * num_actions + a]; }

    void validate() const {
        if (transition.size() != num_states * num_actions * num_states ||
            reward.size() != num_states * num_actions || start.size() != num_states)
            throw StructuralError("tabular mdp: array sizes do not match S, A");
        for (std::size_t s = 0; s < num_states; ++s)
            for (std::size_t a = 0; a < num_actions; ++a) {
                Real sum = 0;
                for (std::size_t s2 = 0; s2 < num_states; ++s2) {
                    const Real v = p(s, a, s2);
                    if (v < Real(0)) throw StructuralError("tabular mdp: negative transition");
                    sum += v;
                }
                if (std::abs(double(sum - Real(1))) > 1e-12)
                    throw StructuralError("tabular mdp: transition row does not sum to 1");
            }
        Real mass = 0;
        for (Real v : start) mass += v;
        if (std::abs(double(mass - Real(1))) > 1e-12)
            throw StructuralError("tabular mdp: start distribution does not sum to 1");
        for (Real v : reward)
            if (!std::isfinite(double(v))) throw NumericError("tabular mdp: non-finite reward");
    }
};

/// Softmax policy over logits [S*A]; pi(a|s) = softmax of row s.
template <typename Real = double>
struct SoftmaxPolicy {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    std::vector<Real> logits;  // [S*A]

    Real logit(std::size_t s, std::size_t a) const { return logits[s * num_actions + a]; }
    Real& logit(std::size_t s, std::size_t a) { return logits[s * num_actions + a]; }

    std::vector<Real> log_probs(std::size_t s) const {
        std::vector<Real> lp(num_actions);
        Real mx = logit(s, 0);
        for (std::size_t a = 1; a < num_actions; ++a) mx = std::max(mx, logit(s, a));
        Real z = 0;
        for (std::size_t a = 0; a < num_actions; ++a) z += std::exp(logit(s, a) - mx);
        const Real lse = mx + std::log(z);
        for (std::size_t a = 0; a < num_actions; ++a) lp[a] = logit(s, a) - lse;
        return lp;
    }

    std::vector<Real> probs(std::size_t s) const {
        std::vector<Real> pr = log_probs(s);
        for (auto& v : pr) v = std::exp(v);
        return pr;
    }

    Real entropy(std::size_t s) const {
        const std::vector<Real> lp = log_probs(s);
        Real h = 0;
        for (Real v : lp) h -= std::exp(v) * v;
        return h;
    }
};

template <typename To, typename From>
Mdp<To> convert(const Mdp<From>& m) {
    Mdp<To> out;
    out.num_states = m.num_states;
    out.num_actions = m.num_actions;
    out.gamma = To(m.gamma);
    out.transition.assign(m.transition.begin(), m.transition.end());
    out.reward.assign(m.reward.begin(), m.reward.end());
    out.start.assign(m.start.begin(), m.start.end());
    return out;
}

template <typename To, typename From>
SoftmaxPolicy<To> convert(const SoftmaxPolicy<From>& p) {
    SoftmaxPolicy<To> out;
    out.num_states = p.num_states;
    out.num_actions = p.num_actions;
    out.logits.assign(p.logits.begin(), p.logits.end());
    return out;
}

namespace detail {
template <typename Real>
void require_discounted(const Mdp<Real>& mdp) {
    if (!(mdp.gamma >= Real(0) && mdp.gamma < Real(1)))
        throw ConfigError("tabular oracle: need 0 <= gamma < 1 for a solvable system");
}
}  // namespace detail

/// Exact soft Q table: the unique solution of
///   Q(s,a) = R(s,a) + gamma * sum_s' P(s,a,s') [ sum_a' pi(a'|s') Q(s',a') + tau * H(s') ],
/// solved as a dense linear system.
template <typename Real>
std::vector<Real> exact_soft_q(const Mdp<Real>& mdp, const SoftmaxPolicy<Real>& policy, Real tau) {
    detail::require_discounted(mdp);
    using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
    const std::size_t S = mdp.num_states, A = mdp.num_actions, n = S * A;
    Mat system = Mat::Identity(n, n);
    Vec rhs(n);
    std::vector<std::vector<Real>> pi(S);
    std::vector<Real> ent(S);
    for (std::size_t s = 0; s < S; ++s) {
        pi[s] = policy.probs(s);
        ent[s] = policy.entropy(s);
    }
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            const std::size_t i = s * A + a;
            Real bonus = 0;
            for (std::size_t s2 = 0; s2 < S; ++s2) {
                const Real pr = mdp.p(s, a, s2);
                bonus += pr * ent[s2];
                for (std::size_t a2 = 0; a2 < A; ++a2)
                    system(i, s2 * A + a2) -= mdp.gamma * pr * pi[s2][a2];
            }
            rhs(i) = mdp.r(s, a) + mdp.gamma * tau * bonus;
        }
    const Vec q = system.partialPivLu().solve(rhs);
    return std::vector<Real>(q.data(), q.data() + n);
}

/// Unnormalized discounted state occupancy
///   rho(s) = sum_{s0} rho0(s0) sum_k gamma^k p_k(s0 -> s),
/// with total mass 1/(1-gamma); computed by a linear solve.
template <typename Real>
std::vector<Real> discounted_occupancy(const Mdp<Real>& mdp, const SoftmaxPolicy<Real>& policy) {
    detail::require_discounted(mdp);
    using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
    const std::size_t S = mdp.num_states, A = mdp.num_actions;
    Mat system = Mat::Identity(S, S);
    for (std::size_t s = 0; s < S; ++s) {
        const std::vector<Real> pi = policy.probs(s);
        for (std::size_t s2 = 0; s2 < S; ++s2) {
            Real ptotal = 0;
            for (std::size_t a = 0; a < A; ++a) ptotal += pi[a] * mdp.p(s, a, s2);
            system(s2, s) -= mdp.gamma * ptotal;  // transposed chain operator
        }
    }
    Vec rhs(S);
    for (std::size_t s = 0; s < S; ++s) rhs(s) = mdp.start[s];
    const Vec rho = system.partialPivLu().solve(rhs);
    return std::vector<Real>(rho.data(), rho.data() + S);
}

/// Entropy-regularized objective J = sum_s rho(s) [ sum_a pi(a|s) R(s,a) + tau H(s) ].
template <typename Real>
Real exact_objective(const Mdp<Real>& mdp, const SoftmaxPolicy<Real>& policy, Real tau) {
    const std::vector<Real> rho = discounted_occupancy(mdp, policy);
    Real j = 0;
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
        const std::vector<Real> pi = policy.probs(s);
        Real term = tau * policy.entropy(s);
        for (std::size_t a = 0; a < mdp.num_actions; ++a) term += pi[a] * mdp.r(s, a);
        j += rho[s] * term;
    }
    return j;
}

/// Same objective written through the soft Q function at the start
/// distribution: J = E_{s0~rho0}[ E_{a~pi}[Q(s0,a)] + tau H(s0) ].
template <typename Real>
Real exact_objective_q_form(const Mdp<Real>& mdp, const SoftmaxPolicy<Real>& policy, Real tau) {
    const std::vector<Real> q = exact_soft_q(mdp, policy, tau);
    Real j = 0;
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
        if (mdp.start[s] == Real(0)) continue;
        const std::vector<Real> pi = policy.probs(s);
        Real v = tau * policy.entropy(s);
        for (std::size_t a = 0; a < mdp.num_actions; ++a)
            v += pi[a] * q[s * mdp.num_actions + a];
        j += mdp.start[s] * v;
    }
    return j;
}

/// Exact gradient of the objective with respect to the policy logits:
///   grad[s,b] = rho(s) * pi(b|s) * (w(s,b) - sum_a pi(a|s) w(s,a)),
/// with weight w = Q - tau*log pi - tau. `keep_constant` drops the trailing
/// -tau when false; by the score identity the result is unchanged.
template <typename Real>
std::vector<Real> exact_policy_gradient(const Mdp<Real>& mdp, const SoftmaxPolicy<Real>& policy,
                                        Real tau, bool keep_constant = true) {
    const std::vector<Real> q = exact_soft_q(mdp, policy, tau);
    const std::vector<Real> rho = discounted_occupancy(mdp, policy);
    const std::size_t S = mdp.num_states, A = mdp.num_actions;
    std::vector<Real> grad(S * A, Real(0));
    for (std::size_t s = 0; s < S; ++s) {
        const std::vector<Real> pi = policy.probs(s);
        const std::vector<Real> lp = policy.log_probs(s);
        std::vector<Real> w(A);
        Real wbar = 0;
        for (std::size_t a = 0; a < A; ++a) {
            w[a] = q[s * A + a] - tau * lp[a] - (keep_constant ? tau : Real(0));
            wbar += pi[a] * w[a];
        }
        for (std::size_t b = 0; b < A; ++b)
            grad[s * A + b] = rho[s] * pi[b] * (w[b] - wbar);
    }
    return grad;
}

/// Central finite differences of exact_objective, coordinate by coordinate.
template <typename Real>
std::vector<Real> finite_difference_gradient(const Mdp<Real>& mdp,
                                             const SoftmaxPolicy<Real>& policy, Real tau,
                                             Real h = Real(1e-6)) {
    if (!(h > Real(0))) throw ConfigError("finite_difference_gradient: h must be > 0");
    std::vector<Real> grad(policy.logits.size());
    SoftmaxPolicy<Real> probe = policy;
    for (std::size_t i = 0; i < probe.logits.size(); ++i) {
        const Real saved = probe.logits[i];
        probe.logits[i] = saved + h;
        const Real plus = exact_objective(mdp, probe, tau);
        probe.logits[i] = saved - h;
        const Real minus = exact_objective(mdp, probe, tau);
        probe.logits[i] = saved;
        grad[i] = (plus - minus) / (Real(2) * h);
    }
    return grad;
}

struct McEstimate {
    std::vector<double> estimate;        // [S*A]
    std::vector<double> standard_error;  // [S*A]
    std::size_t samples = 0;
};

/// Monte-Carlo estimate of the exact gradient: draws (s,a) from the
/// normalized occupancy rho(s)pi(a|s)/||rho||_1, averages
/// w * grad log pi, and multiplies back by ||rho||_1.
inline McEstimate mc_gradient_estimate(const Mdp<double>& mdp, const SoftmaxPolicy<double>& policy,
                                       double tau, std::size_t num_samples, Rng& rng) {
    if (num_samples < 1) throw PreconditionError("mc_gradient_estimate: need K >= 1");
    const std::size_t S = mdp.num_states, A = mdp.num_actions;
    const std::vector<double> q = exact_soft_q(mdp, policy, tau);
    const std::vector<double> rho = discounted_occupancy(mdp, policy);
    std::vector<std::vector<double>> pi(S), lp(S);
    for (std::size_t s = 0; s < S; ++s) {
        pi[s] = policy.probs(s);
        lp[s] = policy.log_probs(s);
    }
    double mass = 0.0;
    std::vector<double> cumulative(S * A);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            mass += rho[s] * pi[s][a];
            cumulative[s * A + a] = mass;
        }
    std::vector<double> sum(S * A, 0.0), sumsq(S * A, 0.0);
    for (std::size_t k = 0; k < num_samples; ++k) {
        const double u = rng.uniform() * mass;
        std::size_t idx = static_cast<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        idx = std::min(idx, S * A - 1);
        const std::size_t s = idx / A;
        const std::size_t a = idx % A;
        const double w = q[s * A + a] - tau * lp[s][a] - tau;
        // score is nonzero only on row s; untouched coordinates sample zero.
        for (std::size_t b = 0; b < A; ++b) {
            const double score = (b == a ? 1.0 : 0.0) - pi[s][b];
            const double g = mass * w * score;
            sum[s * A + b] += g;
            sumsq[s * A + b] += g * g;
        }
    }
    McEstimate out;
    out.samples = num_samples;
    out.estimate.resize(S * A);
    out.standard_error.resize(S * A);
    const double n = static_cast<double>(num_samples);
    for (std::size_t i = 0; i < S * A; ++i) {
        const double mean = sum[i] / n;
        out.estimate[i] = mean;
        const double var = std::max(0.0, sumsq[i] / n - mean * mean);
        out.standard_error[i] = std::sqrt(var / n);
    }
    return out;
}

/// Random dense MDP: transition rows and the start distribution normalized
/// uniforms, rewards uniform in [-1, 1].
inline Mdp<double> make_random_mdp(std::size_t num_states, std::size_t num_actions, double gamma,
                                   Rng& rng) {
    Mdp<double> mdp;
    mdp.num_states = num_states;
    mdp.num_actions = num_actions;
    mdp.gamma = gamma;
    mdp.transition.resize(num_states * num_actions * num_states);
    mdp.reward.resize(num_states * num_actions);
    mdp.start.resize(num_states);
    for (std::size_t s = 0; s < num_states; ++s)
        for (std::size_t a = 0; a < num_actions; ++a) {
            double total = 0.0;
            for (std::size_t s2 = 0; s2 < num_states; ++s2) {
                const double v = rng.uniform() + 1e-3;
                mdp.p(s, a, s2) = v;
                total += v;
            }
            for (std::size_t s2 = 0; s2 < num_states; ++s2) mdp.p(s, a, s2) /= total;
            mdp.r(s, a) = rng.uniform(-1.0, 1.0);
        }
    double total = 0.0;
    for (auto& v : mdp.start) {
        v = rng.uniform() + 1e-3;
        total += v;
    }
    for (auto& v : mdp.start) v /= total;
    mdp.validate();
    return mdp;
}

inline SoftmaxPolicy<double> make_random_policy(std::size_t num_states, std::size_t num_actions,
                                                Rng& rng) {
    SoftmaxPolicy<double> p;
    p.num_states = num_states;
    p.num_actions = num_actions;
    p.logits.resize(num_states * num_actions);
    for (auto& v : p.logits) v = rng.uniform(-1.0, 1.0);
    return p;
}

inline void write_mdp(std::ostream& out, const Mdp<double>& mdp) {
    out << "tabular-mdp v1\n";
    out << "states " << mdp.num_states << "\nactions " << mdp.num_actions << '\n';
    out << "gamma " << fmt17(mdp.gamma) << '\n';
    out << "start";
    for (double v : mdp.start) out << ' ' << fmt17(v);
    out << "\nR\n";
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
        for (std::size_t a = 0; a < mdp.num_actions; ++a)
            out << (a ? " " : "") << fmt17(mdp.r(s, a));
        out << '\n';
    }
    out << "P\n";
    for (std::size_t s = 0; s < mdp.num_states; ++s)
        for (std::size_t a = 0; a < mdp.num_actions; ++a) {
            for (std::size_t s2 = 0; s2 < mdp.num_states; ++s2)
                out << (s2 ? " " : "") << fmt17(mdp.p(s, a, s2));
            out << '\n';
        }
}

inline Mdp<double> read_mdp(std::istream& in) {
    using softgrad::detail::expect_token;
    using softgrad::detail::next_double;
    using softgrad::detail::next_size;
    using softgrad::detail::next_token;
    expect_token(in, "tabular-mdp");
    expect_token(in, "v1");
    Mdp<double> mdp;
    expect_token(in, "states");
    mdp.num_states = next_size(in, "states");
    expect_token(in, "actions");
    mdp.num_actions = next_size(in, "actions");
    expect_token(in, "gamma");
    mdp.gamma = next_double(in, "gamma");
    expect_token(in, "start");
    mdp.start.resize(mdp.num_states);
    for (auto& v : mdp.start) v = next_double(in, "start");
    expect_token(in, "R");
    mdp.reward.resize(mdp.num_states * mdp.num_actions);
    for (auto& v : mdp.reward) v = next_double(in, "R");
    expect_token(in, "P");
    mdp.transition.resize(mdp.num_states * mdp.num_actions * mdp.num_states);
    for (auto& v : mdp.transition) v = next_double(in, "P");
    mdp.validate();
    return mdp;
}

}  // namespace softgrad::tabular
