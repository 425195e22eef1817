#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "softgrad/config.hpp"
#include "softgrad/critic.hpp"
#include "softgrad/env.hpp"
#include "softgrad/metrics.hpp"
#include "softgrad/policy.hpp"
#include "softgrad/replay.hpp"

namespace softgrad {

struct ActorGradient {
    PolicyGrad grad;
    double mean_entropy = 0.0;  // analytic policy entropy averaged over the batch states
};

/// Double-sampled soft policy gradient (ascent direction):
///   (1/(N*M)) sum_i sum_j (Q(s_i, a_ij) - tau*log pi(a_ij|s_i) - tau)
///                         * grad_theta log pi(a_ij|s_i),
/// with actions freshly drawn from the current policy and Q from the online
/// critic. Per state, the M weighted score cotangents are accumulated before
/// a single backward pass, which is algebraically identical to summing M
/// separate backward passes.
inline ActorGradient actor_gradient(const GaussianPolicy& policy, const SoftQ& critic,
                                    const std::vector<Vector>& states, std::size_t action_samples,
                                    double tau, Rng& rng) {
    const std::size_t n = states.size();
    if (n == 0) throw PreconditionError("actor_gradient: empty state batch");
    if (action_samples < 1) throw PreconditionError("actor_gradient: need M >= 1");
    const std::size_t adim = policy.action_dim();
    const std::size_t width = critic.state_dim + critic.action_dim;

    std::vector<PolicyEval> evals;
    evals.reserve(n);
    thread_local Matrix inputs;  // scratch, reused across train steps
    inputs.rows = n * action_samples;
    inputs.cols = width;
    inputs.data.resize(inputs.rows * width);
    std::vector<double> log_probs(n * action_samples);
    Vector action(adim);
    for (std::size_t i = 0; i < n; ++i) {
        evals.push_back(policy_forward(policy, states[i]));
        const PolicyEval& ev = evals.back();
        // log N(a) = sum_d (-ln sqrt(2 pi) - ln sigma_d) - z^2/2 with z the draw itself.
        double lp_base = 0.0;
        for (std::size_t d = 0; d < adim; ++d)
            lp_base += -0.5 * kLogTwoPi - std::log(ev.stddev[d]);
        for (std::size_t j = 0; j < action_samples; ++j) {
            double* dst = inputs.data.data() + (i * action_samples + j) * width;
            for (std::size_t d = 0; d < critic.state_dim; ++d) dst[d] = states[i][d];
            double zsq = 0.0;
            for (std::size_t d = 0; d < adim; ++d) {
                const double z = rng.normal();
                zsq += z * z;
                action[d] = ev.mean[d] + ev.stddev[d] * z;
                dst[critic.state_dim + d] = action[d];
            }
            log_probs[i * action_samples + j] = lp_base - 0.5 * zsq;
        }
    }
    const Vector q = q_values_batch(critic, inputs);

    ActorGradient out;
    out.grad = grad_like(policy);
    Vector cot_mean(adim), cot_std(adim), sample_cm, sample_cs;
    for (std::size_t i = 0; i < n; ++i) {
        const PolicyEval& ev = evals[i];
        out.mean_entropy += entropy_from(ev.stddev);
        std::fill(cot_mean.begin(), cot_mean.end(), 0.0);
        std::fill(cot_std.begin(), cot_std.end(), 0.0);
        for (std::size_t j = 0; j < action_samples; ++j) {
            const std::size_t row = i * action_samples + j;
            const double lp = log_probs[row];
            if (!std::isfinite(q[row]) || !std::isfinite(lp))
                throw NumericError("actor_gradient: non-finite Q or log-prob at state " +
                                   std::to_string(i) + ", sample " + std::to_string(j));
            const double weight = q[row] - tau * lp - tau;
            const double* arow = inputs.data.data() + row * width + critic.state_dim;
            for (std::size_t d = 0; d < adim; ++d) action[d] = arow[d];
            log_prob_cotangents(ev.mean, ev.stddev, action, sample_cm, sample_cs);
            for (std::size_t d = 0; d < adim; ++d) {
                cot_mean[d] += weight * sample_cm[d];
                cot_std[d] += weight * sample_cs[d];
            }
        }
        policy_backward_accumulate(policy, ev.tape, cot_mean, cot_std, out.grad);
    }
    out.grad.scale(1.0 / static_cast<double>(n * action_samples));
    out.mean_entropy /= static_cast<double>(n);
    return out;
}

struct ActorUpdateResult {
    double grad_norm_pre = 0.0;
    double grad_norm_post = 0.0;
};

/// Clip by global norm, then take an ascending Adam step.
inline ActorUpdateResult clipped_actor_update(GaussianPolicy& policy, PolicyGrad gradient,
                                              double clip_norm, const AdamConfig& adam) {
    ActorUpdateResult res;
    res.grad_norm_pre = clip_by_global_norm(gradient, clip_norm);
    res.grad_norm_post = std::min(res.grad_norm_pre, clip_norm);
    adam_step(policy, gradient, adam, Direction::Ascend);
    return res;
}

struct StepMetrics {
    double critic_loss = 0.0;
    double actor_grad_norm_pre = 0.0;
    double actor_grad_norm_post = 0.0;
    double mean_policy_entropy = 0.0;
};

/// Online and target networks plus the replay buffer: everything train_step
/// mutates.
struct DspgAgent {
    AgentConfig config;
    GaussianPolicy policy;
    GaussianPolicy target_policy;
    SoftQ critic;
    ReplayBuffer buffer;
    Rng rng;

    DspgAgent(const AgentConfig& cfg, const EnvSpec& env_spec)
        : config(cfg),
          policy(make_init_policy(cfg, env_spec)),
          target_policy(policy),
          critic(make_init_critic(cfg, env_spec)),
          buffer(cfg.buffer_capacity, env_spec.state_dim, env_spec.action_dim),
          rng(split_seed(cfg.seed, 1)) {}

  private:
    static GaussianPolicy make_init_policy(const AgentConfig& cfg, const EnvSpec& spec) {
        Rng init(split_seed(cfg.seed, 0));
        return make_policy(spec.state_dim, cfg.hidden_sizes, spec.action_dim, cfg.std_floor, init);
    }
    static SoftQ make_init_critic(const AgentConfig& cfg, const EnvSpec& spec) {
        Rng init(split_seed(cfg.seed, 3));
        return make_critic(spec.state_dim, spec.action_dim, cfg.hidden_sizes, init);
    }
};

/// One full DSPG update: critic regression onto sampled soft Bellman targets,
/// clipped soft policy gradient ascent, then Polyak tracking of both targets.
inline StepMetrics train_step(DspgAgent& agent) {
    const AgentConfig& cfg = agent.config;
    const auto batch = agent.buffer.sample_minibatch(cfg.batch_size, agent.rng);

    BackupBatch backup;
    backup.entries.resize(batch.size());
    const std::size_t adim = agent.policy.action_dim();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Transition& t = *batch[i];
        BackupEntry& e = backup.entries[i];
        e.reward = t.reward;
        e.terminal = t.terminal;
        e.next_state = t.next_state;
        if (!t.terminal) {
            const PolicyEval ev = policy_forward(agent.target_policy, t.next_state);
            e.next_actions = Matrix(cfg.action_samples, adim);
            e.next_log_probs.resize(cfg.action_samples);
            double lp_base = 0.0;
            for (std::size_t d = 0; d < adim; ++d)
                lp_base += -0.5 * kLogTwoPi - std::log(ev.stddev[d]);
            for (std::size_t j = 0; j < cfg.action_samples; ++j) {
                double* row = e.next_actions.data.data() + j * adim;
                double zsq = 0.0;
                for (std::size_t d = 0; d < adim; ++d) {
                    const double z = agent.rng.normal();
                    zsq += z * z;
                    row[d] = ev.mean[d] + ev.stddev[d] * z;
                }
                e.next_log_probs[j] = lp_base - 0.5 * zsq;
            }
            e.next_entropy = entropy_from(ev.stddev);
        }
    }
    const Vector targets = sampled_backup(agent.critic, backup, cfg.gamma, cfg.tau);

    std::vector<Vector> states, actions;
    states.reserve(batch.size());
    actions.reserve(batch.size());
    for (const Transition* t : batch) {
        states.push_back(t->state);
        actions.push_back(t->action);
    }
    const SoftLossResult loss = soft_loss(agent.critic, states, actions, targets);
    critic_update(agent.critic, loss.grad, {cfg.critic_lr, 0.9, 0.999, 1e-8});

    ActorGradient ag =
        actor_gradient(agent.policy, agent.critic, states, cfg.action_samples, cfg.tau, agent.rng);
    const ActorUpdateResult upd = clipped_actor_update(agent.policy, std::move(ag.grad),
                                                       cfg.clip_norm, {cfg.actor_lr, 0.9, 0.999, 1e-8});

    polyak_update(agent.critic.target, agent.critic.net, cfg.polyak_alpha);
    polyak_update(agent.target_policy, agent.policy, cfg.polyak_alpha);

    return {loss.loss, upd.grad_norm_pre, upd.grad_norm_post, ag.mean_entropy};
}

struct EvalResult {
    double mean_return = 0.0;
    double std_return = 0.0;
    std::size_t episodes = 0;
};

/// Deterministic rollouts with the policy mean action; returns are unscaled.
inline EvalResult evaluate_policy(const GaussianPolicy& policy, const std::string& env_name,
                                  std::uint64_t seed, std::size_t episodes) {
    if (episodes == 0) throw PreconditionError("evaluate_policy: need at least one episode");
    auto env = make_env(env_name, seed);
    if (env->spec().state_dim != policy.state_dim())
        throw StructuralError("evaluate_policy: policy state dim " +
                              std::to_string(policy.state_dim()) + " does not match env " +
                              env_name);
    std::vector<double> returns(episodes, 0.0);
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        Vector state = env->reset();
        while (true) {
            const StepResult res = env->step(policy_forward(policy, state).mean);
            returns[ep] += res.reward;
            if (res.terminal || res.truncated) break;
            state = res.next_state;
        }
    }
    EvalResult out;
    out.episodes = episodes;
    for (double r : returns) out.mean_return += r;
    out.mean_return /= static_cast<double>(episodes);
    double var = 0.0;
    for (double r : returns) var += (r - out.mean_return) * (r - out.mean_return);
    out.std_return = episodes > 1 ? std::sqrt(var / static_cast<double>(episodes - 1)) : 0.0;
    return out;
}

/// Scripted uniform-random policy over the action box, same protocol as
/// evaluate_policy; used as the in-run learning baseline.
inline EvalResult random_policy_baseline(const std::string& env_name, std::uint64_t seed,
                                         std::size_t episodes) {
    auto env = make_env(env_name, seed);
    Rng rng(split_seed(seed, 77));
    const EnvSpec& spec = env->spec();
    std::vector<double> returns(episodes, 0.0);
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        env->reset();
        while (true) {
            Vector action(spec.action_dim);
            for (std::size_t d = 0; d < action.size(); ++d)
                action[d] = rng.uniform(spec.action_low[d], spec.action_high[d]);
            const StepResult res = env->step(action);
            returns[ep] += res.reward;
            if (res.terminal || res.truncated) break;
        }
    }
    EvalResult out;
    out.episodes = episodes;
    for (double r : returns) out.mean_return += r;
    out.mean_return /= static_cast<double>(episodes);
    double var = 0.0;
    for (double r : returns) var += (r - out.mean_return) * (r - out.mean_return);
    out.std_return = episodes > 1 ? std::sqrt(var / static_cast<double>(episodes - 1)) : 0.0;
    return out;
}

inline void write_agent_checkpoint(std::ostream& out, const std::string& env_name,
                                   const DspgAgent& agent) {
    out << kCheckpointHeader << '\n';
    out << "env " << env_name << '\n';
    write_policy(out, agent.policy);
    write_policy(out, agent.target_policy);
    write_critic(out, agent.critic);
}

struct AgentCheckpoint {
    std::string env_name;
    GaussianPolicy policy;
    GaussianPolicy target_policy;
    SoftQ critic;
};

inline AgentCheckpoint read_agent_checkpoint(std::istream& in) {
    detail::expect_token(in, "softgrad-checkpoint");
    detail::expect_token(in, "v1");
    detail::expect_token(in, "env");
    AgentCheckpoint ckpt;
    ckpt.env_name = detail::next_token(in, "env name");
    ckpt.policy = read_policy(in);
    ckpt.target_policy = read_policy(in);
    ckpt.critic = read_critic(in);
    return ckpt;
}

inline AgentCheckpoint load_agent_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    return read_agent_checkpoint(in);
}

struct RunSummary {
    std::size_t env_steps = 0;
    std::size_t train_steps = 0;
    std::size_t episodes = 0;
    double last_eval_mean = 0.0;
    EvalResult baseline;
    double wall_clock_seconds = 0.0;
};

/// Algorithm outer loop. Writes metrics.jsonl and checkpoints into run_dir;
/// the whole run is a deterministic function of the config (wall-clock time
/// is kept out of the metrics stream).
inline RunSummary run_training(Env& env, const AgentConfig& cfg, const std::string& run_dir) {
    namespace fs = std::filesystem;
    cfg.validate();
    fs::create_directories(run_dir);
    const auto t_start = std::chrono::steady_clock::now();

    DspgAgent agent(cfg, env.spec());
    JsonlWriter metrics(run_dir + "/metrics.jsonl");
    RunSummary summary;

    const auto checkpoint_to = [&](const std::string& name) {
        std::ofstream out(run_dir + "/" + name);
        write_agent_checkpoint(out, cfg.env, agent);
    };

    if (cfg.total_env_steps == 0) {
        checkpoint_to("checkpoint_final.txt");
        return summary;
    }

    summary.baseline = random_policy_baseline(cfg.env, split_seed(cfg.seed, 4), 20);
    metrics.write(Json{{"type", "baseline"},
                       {"return_mean", summary.baseline.mean_return},
                       {"return_std", summary.baseline.std_return},
                       {"episodes", summary.baseline.episodes}});

    const std::size_t train_gate = std::max(cfg.batch_size, cfg.warmup);
    std::size_t eval_count = 0;
    double episode_return = 0.0;
    std::size_t episode_train_steps = 0;
    StepMetrics accum;

    Vector state = env.reset();
    try {
        for (std::size_t step = 1; step <= cfg.total_env_steps; ++step) {
            Vector action = sample(agent.policy, state, 1, agent.rng)[0].action;
            const EnvSpec& spec = env.spec();
            for (std::size_t d = 0; d < action.size(); ++d)
                action[d] = std::clamp(action[d], spec.action_low[d], spec.action_high[d]);
            const StepResult res = env.step(action);
            agent.buffer.push({state, action, res.reward * cfg.reward_scale, res.next_state,
                               res.terminal, res.truncated});
            episode_return += res.reward;
            summary.env_steps = step;

            if (agent.buffer.size() >= train_gate) {
                for (std::size_t t = 0; t < cfg.train_steps_per_env_step; ++t) {
                    const StepMetrics m = train_step(agent);
                    accum.critic_loss += m.critic_loss;
                    accum.actor_grad_norm_pre += m.actor_grad_norm_pre;
                    accum.actor_grad_norm_post += m.actor_grad_norm_post;
                    accum.mean_policy_entropy += m.mean_policy_entropy;
                    ++episode_train_steps;
                    ++summary.train_steps;
                }
            }

            if (res.terminal || res.truncated) {
                const double k = episode_train_steps > 0 ? static_cast<double>(episode_train_steps)
                                                         : 1.0;
                metrics.write(Json{{"type", "train"},
                                   {"env_step", step},
                                   {"episode_return", episode_return},
                                   {"critic_loss", accum.critic_loss / k},
                                   {"actor_grad_norm_pre", accum.actor_grad_norm_pre / k},
                                   {"actor_grad_norm_post", accum.actor_grad_norm_post / k},
                                   {"mean_policy_entropy", accum.mean_policy_entropy / k},
                                   {"train_steps", episode_train_steps}});
                ++summary.episodes;
                episode_return = 0.0;
                episode_train_steps = 0;
                accum = StepMetrics{};
                state = env.reset();
            } else {
                state = res.next_state;
            }

            if (step % cfg.eval_interval == 0) {
                ++eval_count;
                const EvalResult ev = evaluate_policy(agent.policy, cfg.env,
                                                      split_seed(cfg.seed, 100000 + eval_count),
                                                      cfg.eval_episodes);
                summary.last_eval_mean = ev.mean_return;
                metrics.write(Json{{"type", "eval"},
                                   {"env_step", step},
                                   {"eval_return_mean", ev.mean_return},
                                   {"eval_return_std", ev.std_return},
                                   {"episodes", ev.episodes}});
            }
            if (step % cfg.checkpoint_interval == 0)
                checkpoint_to("checkpoint_step" + std::to_string(step) + ".txt");
        }
    } catch (...) {
        checkpoint_to("checkpoint_abort.txt");
        throw;
    }

    checkpoint_to("checkpoint_final.txt");
    summary.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return summary;
}

}  // namespace softgrad
