#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "softgrad/checkpoint.hpp"
#include "softgrad/matrix.hpp"
#include "softgrad/rng.hpp"

namespace softgrad {

struct Transition {
    Vector state;
    Vector action;
    double reward = 0.0;  // stored in scaled units
    Vector next_state;
    bool terminal = false;
    bool truncated = false;
};

/// Fixed-capacity ring buffer of transitions with uniform sampling.
/// Storage grows lazily up to capacity; once full, the oldest entry is
/// overwritten.
class ReplayBuffer {
  public:
    ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
        : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
        if (capacity_ == 0) throw ConfigError("replay buffer: capacity must be >= 1");
    }

    std::size_t size() const { return storage_.size(); }
    std::size_t capacity() const { return capacity_; }

    void push(Transition t) {
        if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_ ||
            t.action.size() != action_dim_)
            throw StructuralError("replay push: transition dims do not match the buffer");
        if (t.terminal && t.truncated)
            throw StructuralError("replay push: terminal and truncated are mutually exclusive");
        if (!std::isfinite(t.reward) || !all_finite(t.state) || !all_finite(t.action) ||
            !all_finite(t.next_state))
            throw NumericError("replay push: non-finite transition entries");
        if (storage_.size() < capacity_) {
            storage_.push_back(std::move(t));
        } else {
            storage_[cursor_] = std::move(t);
        }
        cursor_ = (cursor_ + 1) % capacity_;
    }

    /// N i.i.d. uniform draws with replacement.
    std::vector<const Transition*> sample_minibatch(std::size_t n, Rng& rng) const {
        if (storage_.size() < n || n == 0)
            throw PreconditionError("replay sample: buffer holds " + std::to_string(storage_.size()) +
                                    " transitions, need " + std::to_string(n));
        std::vector<const Transition*> batch(n);
        for (auto& slot : batch) slot = &storage_[rng.index(storage_.size())];
        return batch;
    }

    const Transition& at(std::size_t i) const { return storage_[i]; }

    void export_csv(std::ostream& out) const {
        for (std::size_t d = 0; d < state_dim_; ++d) out << "state" << d << ',';
        for (std::size_t d = 0; d < action_dim_; ++d) out << "action" << d << ',';
        out << "reward,";
        for (std::size_t d = 0; d < state_dim_; ++d) out << "next_state" << d << ',';
        out << "terminal,truncated\n";
        for (std::size_t i = 0; i < storage_.size(); ++i) {
            const Transition& t = storage_[(full() ? cursor_ + i : i) % storage_.size()];
            for (double v : t.state) out << fmt17(v) << ',';
            for (double v : t.action) out << fmt17(v) << ',';
            out << fmt17(t.reward) << ',';
            for (double v : t.next_state) out << fmt17(v) << ',';
            out << (t.terminal ? 1 : 0) << ',' << (t.truncated ? 1 : 0) << '\n';
        }
    }

  private:
    bool full() const { return storage_.size() == capacity_; }

    std::size_t capacity_;
    std::size_t state_dim_;
    std::size_t action_dim_;
    std::size_t cursor_ = 0;
    std::vector<Transition> storage_;
};

}  // namespace softgrad
