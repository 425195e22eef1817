#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "softgrad/matrix.hpp"
#include "softgrad/rng.hpp"

namespace softgrad {

struct EnvSpec {
    std::string name;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    Vector action_low;
    Vector action_high;
    std::size_t max_episode_len = 1;
    double reward_min = 0.0;
    double reward_max = 0.0;
};

struct StepResult {
    Vector next_state;
    double reward = 0.0;
    bool terminal = false;
    bool truncated = false;
};

/// Episode protocol: reset() starts an episode, step() advances it. Actions
/// are clipped to the declared bounds before the dynamics see them. One more
/// step after terminal or truncated is a protocol error.
class Env {
  public:
    virtual ~Env() = default;

    const EnvSpec& spec() const { return spec_; }

    Vector reset() {
        begin_episode(reset_state());
        return state_;
    }

    StepResult step(const Vector& action) {
        if (done_ || steps_ >= spec_.max_episode_len)
            throw ProtocolError(spec_.name + ": step called on a finished episode; reset first");
        if (action.size() != spec_.action_dim)
            throw StructuralError(spec_.name + ": action dim mismatch");
        Vector clipped = action;
        for (std::size_t d = 0; d < clipped.size(); ++d)
            clipped[d] = std::clamp(clipped[d], spec_.action_low[d], spec_.action_high[d]);
        StepResult res = dynamics(state_, clipped);
        ++steps_;
        if (!res.terminal && steps_ >= spec_.max_episode_len) res.truncated = true;
        done_ = res.terminal || res.truncated;
        state_ = res.next_state;
        return res;
    }

    const Vector& state() const { return state_; }

  protected:
    Env(EnvSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_(seed) {}

    void begin_episode(Vector state) {
        steps_ = 0;
        done_ = false;
        state_ = std::move(state);
    }

    virtual Vector reset_state() = 0;
    virtual StepResult dynamics(const Vector& state, const Vector& action) = 0;

    EnvSpec spec_;
    Rng rng_;

  private:
    Vector state_;
    std::size_t steps_ = 0;
    bool done_ = true;  // must reset before the first step
};

/// Double-integrator point mass on the plane, goal at the origin.
/// See docs/environments.md for the constants.
class PointMass2D final : public Env {
  public:
    explicit PointMass2D(std::uint64_t seed)
        : Env({"point-mass-2d", 4, 2, {-1.0, -1.0}, {1.0, 1.0}, 200, -200.02, 0.0}, seed) {}

    static constexpr double kDt = 0.1;
    static constexpr double kPosBound = 10.0;
    static constexpr double kVelBound = 5.0;

    /// Start an episode from an exact state (for tests and scripted rollouts).
    Vector reset_to(double x, double y, double vx, double vy) {
        begin_episode({x, y, vx, vy});
        return state();
    }

  protected:
    Vector reset_state() override {
        return {rng_.uniform(-1.0, 1.0), rng_.uniform(-1.0, 1.0), 0.0, 0.0};
    }

    StepResult dynamics(const Vector& s, const Vector& a) override {
        StepResult res;
        double vx = std::clamp(s[2] + a[0] * kDt, -kVelBound, kVelBound);
        double vy = std::clamp(s[3] + a[1] * kDt, -kVelBound, kVelBound);
        double x = std::clamp(s[0] + vx * kDt, -kPosBound, kPosBound);
        double y = std::clamp(s[1] + vy * kDt, -kPosBound, kPosBound);
        res.next_state = {x, y, vx, vy};
        res.reward = -(x * x + y * y) - 0.01 * (a[0] * a[0] + a[1] * a[1]);
        return res;
    }
};

/// Rigid pendulum swing-up, upright is angle zero. Observation is
/// (cos angle, sin angle, angular velocity).
class PendulumSwingup final : public Env {
  public:
    explicit PendulumSwingup(std::uint64_t seed)
        : Env({"pendulum-swingup", 3, 1, {-2.0}, {2.0}, 200,
               -(std::numbers::pi * std::numbers::pi + 0.1 * 64.0 + 0.001 * 4.0), 0.0},
              seed) {}

    static constexpr double kGravity = 10.0;
    static constexpr double kMass = 1.0;
    static constexpr double kLength = 1.0;
    static constexpr double kDt = 0.05;
    static constexpr double kMaxSpeed = 8.0;

    /// Start an episode from an exact (angle, angular velocity).
    Vector reset_to(double angle, double speed) {
        angle_ = angle;
        speed_ = speed;
        begin_episode(observe());
        return state();
    }

  protected:
    Vector reset_state() override {
        angle_ = rng_.uniform(-std::numbers::pi, std::numbers::pi);
        speed_ = rng_.uniform(-1.0, 1.0);
        return observe();
    }

    StepResult dynamics(const Vector&, const Vector& a) override {
        const double torque = a[0];
        const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(angle_) +
                             3.0 / (kMass * kLength * kLength) * torque;
        speed_ = std::clamp(speed_ + accel * kDt, -kMaxSpeed, kMaxSpeed);
        angle_ += speed_ * kDt;
        StepResult res;
        res.next_state = observe();
        const double wrapped = wrap_angle(angle_);
        res.reward = -(wrapped * wrapped + 0.1 * speed_ * speed_ + 0.001 * torque * torque);
        return res;
    }

  private:
    Vector observe() const { return {std::cos(angle_), std::sin(angle_), speed_}; }

    static double wrap_angle(double a) {
        const double two_pi = 2.0 * std::numbers::pi;
        a = std::fmod(a + std::numbers::pi, two_pi);
        if (a < 0) a += two_pi;
        return a - std::numbers::pi;
    }

    double angle_ = 0.0;
    double speed_ = 0.0;
};

/// Single-state quadratic bandit: every episode is one step, reward -a^2.
class ContinuousBandit final : public Env {
  public:
    explicit ContinuousBandit(std::uint64_t seed)
        : Env({"continuous-bandit", 1, 1, {-2.0}, {2.0}, 1, -4.0, 0.0}, seed) {}

  protected:
    Vector reset_state() override { return {1.0}; }

    StepResult dynamics(const Vector& s, const Vector& a) override {
        StepResult res;
        res.next_state = s;
        res.reward = -a[0] * a[0];
        res.terminal = true;
        return res;
    }
};

inline std::unique_ptr<Env> make_env(const std::string& name, std::uint64_t seed) {
    if (name == "point-mass-2d") return std::make_unique<PointMass2D>(seed);
    if (name == "pendulum-swingup") return std::make_unique<PendulumSwingup>(seed);
    if (name == "continuous-bandit") return std::make_unique<ContinuousBandit>(seed);
    throw ConfigError("unknown environment: " + name);
}

}  // namespace softgrad
