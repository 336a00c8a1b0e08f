#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "clipsgd/cartpole.hpp"
#include "clipsgd/rng.hpp"

namespace clipsgd {

struct Transition {
    CartPoleState s;
    Action a = Action::Stay;
    double r = 0.0;
    CartPoleState s_next;
    bool done = false;
};

/// Fixed-capacity ring of transitions with uniform with-replacement sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("replay: capacity must be positive");
        ring_.reserve(capacity);
    }

    void push(const Transition& t) {
        if (ring_.size() < capacity_) {
            ring_.push_back(t);
        } else {
            ring_[next_] = t;
        }
        next_ = (next_ + 1) % capacity_;
    }

    std::size_t size() const { return ring_.size(); }
    std::size_t capacity() const { return capacity_; }

    const Transition& sample(Rng& rng) const {
        if (ring_.empty()) throw std::invalid_argument("replay: sampling from empty buffer");
        return ring_[rng.uniform_int(ring_.size())];
    }

    const Transition& at(std::size_t i) const { return ring_.at(i); }

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> ring_;
};

} // namespace clipsgd
