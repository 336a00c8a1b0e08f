#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "clipsgd/matrix.hpp"
#include "clipsgd/rng.hpp"

namespace clipsgd {

struct CartPoleState {
    double x = 0.0;         // cart position (m)
    double x_dot = 0.0;     // cart velocity (m/s)
    double theta = 0.0;     // pole angle (rad)
    double theta_dot = 0.0; // pole angular velocity (rad/s)

    Vector as_vector() const { return {x, x_dot, theta, theta_dot}; }

    bool operator==(const CartPoleState&) const = default;
};

enum class Action { Left = 0, Stay = 1, Right = 2 };
constexpr int kNumActions = 3;

/// Classic cart-pole constants (Barto-Sutton-Anderson benchmark) with a
/// third zero-force action.
struct CartPoleDynamics {
    static constexpr double gravity = 9.8;
    static constexpr double cart_mass = 1.0;
    static constexpr double pole_mass = 0.1;
    static constexpr double total_mass = cart_mass + pole_mass;
    static constexpr double half_length = 0.5;
    static constexpr double polemass_length = pole_mass * half_length;
    static constexpr double force_mag = 10.0;
    static constexpr double dt = 0.02;
    static constexpr double theta_limit = 12.0 * M_PI / 180.0;
    static constexpr double x_limit = 2.4;
};

inline bool cartpole_alive(const CartPoleState& s) {
    return std::abs(s.theta) <= CartPoleDynamics::theta_limit &&
           std::abs(s.x) <= CartPoleDynamics::x_limit;
}

struct StepResult {
    CartPoleState s_next;
    double reward = 0.0;
    bool done = false; // bounds violation; the episode time limit is the loop's job
};

/// One Euler step. Reward is +1 for acting from an alive state; done reports
/// a bounds violation of the successor.
inline StepResult env_step(const CartPoleState& s, Action a) {
    if (!cartpole_alive(s)) throw std::invalid_argument("env_step: stepping a terminal state");
    using D = CartPoleDynamics;
    double force = a == Action::Left ? -D::force_mag : (a == Action::Right ? D::force_mag : 0.0);
    double cos_t = std::cos(s.theta), sin_t = std::sin(s.theta);
    double temp = (force + D::polemass_length * s.theta_dot * s.theta_dot * sin_t) / D::total_mass;
    double theta_acc = (D::gravity * sin_t - cos_t * temp) /
                       (D::half_length * (4.0 / 3.0 - D::pole_mass * cos_t * cos_t / D::total_mass));
    double x_acc = temp - D::polemass_length * theta_acc * cos_t / D::total_mass;

    StepResult r;
    r.s_next.x = s.x + D::dt * s.x_dot;
    r.s_next.x_dot = s.x_dot + D::dt * x_acc;
    r.s_next.theta = s.theta + D::dt * s.theta_dot;
    r.s_next.theta_dot = s.theta_dot + D::dt * theta_acc;
    r.reward = 1.0;
    r.done = !cartpole_alive(r.s_next);
    return r;
}

/// Fresh start state with each component uniform in [-0.05, 0.05].
inline CartPoleState env_reset(Rng& rng) {
    CartPoleState s;
    s.x = rng.uniform(-0.05, 0.05);
    s.x_dot = rng.uniform(-0.05, 0.05);
    s.theta = rng.uniform(-0.05, 0.05);
    s.theta_dot = rng.uniform(-0.05, 0.05);
    return s;
}

inline CartPoleState env_reset(std::uint64_t seed) {
    Rng rng(seed);
    return env_reset(rng);
}

} // namespace clipsgd
