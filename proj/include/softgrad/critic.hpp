#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "softgrad/checkpoint.hpp"
#include "softgrad/nn.hpp"
#include "softgrad/optim.hpp"

namespace softgrad {

/// Soft Q-function approximator over concatenated (state, action) inputs,
/// with a slowly tracking target copy.
struct SoftQ {
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    Mlp net;
    Mlp target;
};

inline SoftQ make_critic(std::size_t state_dim, std::size_t action_dim,
                         const std::vector<std::size_t>& hidden, Rng& rng) {
    std::vector<std::size_t> dims{state_dim + action_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    SoftQ critic;
    critic.state_dim = state_dim;
    critic.action_dim = action_dim;
    critic.net = make_mlp(dims, Activation::Relu, Activation::Identity);
    init_mlp(critic.net, rng);
    critic.target = critic.net;
    return critic;
}

inline double q_value(const SoftQ& critic, const Vector& state, const Vector& action,
                      bool use_target = false) {
    if (state.size() != critic.state_dim || action.size() != critic.action_dim)
        throw StructuralError("q_value: state/action dims do not match critic");
    Vector input;
    input.reserve(state.size() + action.size());
    input.insert(input.end(), state.begin(), state.end());
    input.insert(input.end(), action.begin(), action.end());
    const Mlp& net = use_target ? critic.target : critic.net;
    return forward(net, input).output()[0];
}

/// One row per (state, action) pair, already concatenated. Inference only:
/// no tape is built, and the batch is processed in cache-sized tiles over
/// persistent scratch, which keeps the training hot path off the allocator.
inline Vector q_values_batch(const SoftQ& critic, const Matrix& inputs, bool use_target = false) {
    const Mlp& net = use_target ? critic.target : critic.net;
    if (inputs.cols != net.in_dim())
        throw StructuralError("q_values_batch: input width does not match network input dim");
    if (net.out_dim() != 1) throw StructuralError("q_values_batch: critic output must be scalar");

    thread_local std::vector<double> transposed_weights;
    thread_local std::vector<double> buf_a, buf_b;
    std::size_t wt_total = 0, max_width = inputs.cols;
    for (const auto& l : net.layers) {
        wt_total += l.weight.size();
        max_width = std::max(max_width, l.out_dim());
    }
    transposed_weights.resize(wt_total);
    std::vector<std::size_t> wt_offset(net.layers.size());
    {
        std::size_t pos = 0;
        for (std::size_t k = 0; k < net.layers.size(); ++k) {
            const Layer& l = net.layers[k];
            wt_offset[k] = pos;
            for (std::size_t r = 0; r < l.out_dim(); ++r)
                for (std::size_t c = 0; c < l.in_dim(); ++c)
                    transposed_weights[pos + c * l.out_dim() + r] = l.weight(r, c);
            pos += l.weight.size();
        }
    }

    constexpr std::size_t kTile = 256;
    buf_a.resize(kTile * max_width);
    buf_b.resize(kTile * max_width);
    Vector out(inputs.rows);
    for (std::size_t t0 = 0; t0 < inputs.rows; t0 += kTile) {
        const std::size_t rows = std::min(kTile, inputs.rows - t0);
        const double* cur = inputs.data.data() + t0 * inputs.cols;
        std::size_t cur_width = inputs.cols;
        bool in_a = false;  // cur initially aliases the input matrix
        for (std::size_t k = 0; k < net.layers.size(); ++k) {
            const Layer& l = net.layers[k];
            const std::size_t width = l.out_dim();
            double* dst = in_a ? buf_b.data() : buf_a.data();
            if (width >= 8) {
                std::fill(dst, dst + rows * width, 0.0);
                const double* wt = transposed_weights.data() + wt_offset[k];
                for (std::size_t b = 0; b < rows; ++b) {
                    const double* x = cur + b * cur_width;
                    double* y = dst + b * width;
                    for (std::size_t c = 0; c < cur_width; ++c) {
                        const double xv = x[c];
                        const double* column = wt + c * width;
                        for (std::size_t r = 0; r < width; ++r) y[r] += xv * column[r];
                    }
                }
            } else {
                for (std::size_t b = 0; b < rows; ++b) {
                    const double* x = cur + b * cur_width;
                    double* y = dst + b * width;
                    for (std::size_t r = 0; r < width; ++r) {
                        const double* wrow = l.weight.data.data() + r * cur_width;
                        double acc = 0.0;
                        for (std::size_t c = 0; c < cur_width; ++c) acc += wrow[c] * x[c];
                        y[r] = acc;
                    }
                }
            }
            for (std::size_t b = 0; b < rows; ++b) {
                double* y = dst + b * width;
                for (std::size_t r = 0; r < width; ++r)
                    y[r] = apply_activation(l.act, y[r] + l.bias[r]);
            }
            cur = dst;
            cur_width = width;
            in_a = !in_a;
        }
        for (std::size_t b = 0; b < rows; ++b) out[t0 + b] = cur[b * cur_width];
    }
    return out;
}

/// Backup target from already-evaluated Q values and log-densities:
/// terminal transitions return the reward, otherwise
/// r + gamma * mean_j(q_j - tau * log_prob_j).
inline double soft_backup_target(double reward, bool terminal, double gamma, double tau,
                                 const Vector& q_samples, const Vector& log_probs) {
    if (terminal) return reward;
    if (q_samples.empty() || q_samples.size() != log_probs.size())
        throw StructuralError("soft_backup_target: need matching, non-empty samples");
    double acc = 0.0;
    for (std::size_t j = 0; j < q_samples.size(); ++j) {
        if (!std::isfinite(log_probs[j]))
            throw NumericError("soft_backup_target: non-finite log-prob at sample " +
                               std::to_string(j));
        acc += q_samples[j] - tau * log_probs[j];
    }
    return reward + gamma * acc / static_cast<double>(q_samples.size());
}

/// Variant with the analytic policy entropy in place of sampled -log pi.
inline double soft_backup_target_analytic(double reward, bool terminal, double gamma, double tau,
                                          const Vector& q_samples, double entropy) {
    if (terminal) return reward;
    if (q_samples.empty()) throw StructuralError("soft_backup_target: need non-empty samples");
    double acc = 0.0;
    for (double q : q_samples) acc += q;
    return reward + gamma * (acc / static_cast<double>(q_samples.size()) + tau * entropy);
}

/// Per-transition ingredients of the sampled backup. Next actions and their
/// log-densities must come from the target policy; actions are stored as the
/// rows of a flat matrix.
struct BackupEntry {
    double reward = 0.0;
    Vector next_state;
    bool terminal = false;
    Matrix next_actions;  // M x action_dim
    Vector next_log_probs;
    double next_entropy = 0.0;  // used by the analytic variant only
};

struct BackupBatch {
    std::vector<BackupEntry> entries;
};

enum class EntropyEstimate { Sampled, Analytic };

/// Sampled soft Bellman targets y_i, evaluated with the target network.
inline Vector sampled_backup(const SoftQ& critic, const BackupBatch& batch, double gamma,
                             double tau, EntropyEstimate mode = EntropyEstimate::Sampled) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("sampled_backup: need 0 <= gamma < 1");
    if (!(tau >= 0.0)) throw ConfigError("sampled_backup: need tau >= 0");
    // Evaluate all target-net Q values in one batch.
    std::size_t total_rows = 0;
    for (const auto& e : batch.entries)
        if (!e.terminal) {
            if (e.next_actions.rows == 0)
                throw StructuralError("sampled_backup: entry without next actions");
            if (e.next_actions.rows != e.next_log_probs.size() ||
                e.next_actions.cols != critic.action_dim)
                throw StructuralError("sampled_backup: action matrix shape mismatch");
            total_rows += e.next_actions.rows;
        }
    const std::size_t width = critic.state_dim + critic.action_dim;
    thread_local Matrix inputs;  // scratch, reused across backups
    inputs.rows = total_rows;
    inputs.cols = width;
    inputs.data.resize(total_rows * width);
    std::size_t row = 0;
    for (const auto& e : batch.entries) {
        if (e.terminal) continue;
        if (e.next_state.size() != critic.state_dim)
            throw StructuralError("sampled_backup: next state dim mismatch");
        for (std::size_t j = 0; j < e.next_actions.rows; ++j) {
            double* dst = inputs.data.data() + row * width;
            const double* src = e.next_actions.data.data() + j * critic.action_dim;
            for (std::size_t d = 0; d < critic.state_dim; ++d) dst[d] = e.next_state[d];
            for (std::size_t d = 0; d < critic.action_dim; ++d) dst[critic.state_dim + d] = src[d];
            ++row;
        }
    }
    const Vector q = total_rows > 0 ? q_values_batch(critic, inputs, true) : Vector{};
    Vector targets(batch.entries.size());
    row = 0;
    for (std::size_t i = 0; i < batch.entries.size(); ++i) {
        const auto& e = batch.entries[i];
        if (e.terminal) {
            targets[i] = e.reward;
            continue;
        }
        const std::size_t m = e.next_actions.rows;
        const Vector q_slice(q.begin() + row, q.begin() + row + m);
        row += m;
        targets[i] = mode == EntropyEstimate::Sampled
                         ? soft_backup_target(e.reward, false, gamma, tau, q_slice, e.next_log_probs)
                         : soft_backup_target_analytic(e.reward, false, gamma, tau, q_slice,
                                                       e.next_entropy);
    }
    return targets;
}

struct SoftLossResult {
    double loss = 0.0;
    MlpGrad grad;
};

/// Mean squared soft loss over the batch; targets are constants, so the
/// gradient flows only through the online network outputs.
inline SoftLossResult soft_loss(const SoftQ& critic, const std::vector<Vector>& states,
                                const std::vector<Vector>& actions, const Vector& targets) {
    const std::size_t n = states.size();
    if (n == 0) throw PreconditionError("soft_loss: empty batch");
    if (actions.size() != n || targets.size() != n)
        throw StructuralError("soft_loss: batch size mismatch");
    const std::size_t width = critic.state_dim + critic.action_dim;
    Matrix inputs(n, width);
    for (std::size_t i = 0; i < n; ++i) {
        if (states[i].size() != critic.state_dim || actions[i].size() != critic.action_dim)
            throw StructuralError("soft_loss: state/action dims do not match critic");
        double* dst = inputs.data.data() + i * width;
        for (std::size_t d = 0; d < critic.state_dim; ++d) dst[d] = states[i][d];
        for (std::size_t d = 0; d < critic.action_dim; ++d) dst[critic.state_dim + d] = actions[i][d];
    }
    const BatchTape tape = forward_batch(critic.net, inputs);
    const Matrix& out = tape.output();
    SoftLossResult res;
    Matrix cot(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double residual = out(i, 0) - targets[i];
        res.loss += residual * residual;
        cot(i, 0) = 2.0 * residual / static_cast<double>(n);
    }
    res.loss /= static_cast<double>(n);
    res.grad = backward_batch(critic.net, tape, cot).grad;
    return res;
}

/// Descending Adam step on the online network; the target is left alone.
inline void critic_update(SoftQ& critic, const MlpGrad& grad, const AdamConfig& cfg) {
    adam_step(critic.net, grad, cfg, Direction::Descend);
}

inline void write_critic(std::ostream& out, const SoftQ& critic) {
    out << "critic " << critic.state_dim << ' ' << critic.action_dim << '\n';
    write_mlp(out, critic.net);
    write_mlp(out, critic.target);
}

inline SoftQ read_critic(std::istream& in) {
    detail::expect_token(in, "critic");
    SoftQ critic;
    critic.state_dim = detail::next_size(in, "critic state dim");
    critic.action_dim = detail::next_size(in, "critic action dim");
    critic.net = read_mlp(in);
    critic.target = read_mlp(in);
    if (critic.net.in_dim() != critic.state_dim + critic.action_dim)
        throw StructuralError("checkpoint: critic input dim mismatch");
    return critic;
}

}  // namespace softgrad
