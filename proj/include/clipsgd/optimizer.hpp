#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>

#include "clipsgd/network.hpp"
#include "clipsgd/rng.hpp"

namespace clipsgd {

struct ClipConfig {
    double lambda = 1.0;

    explicit ClipConfig(double l = 1.0) : lambda(l) {
        if (!(l > 0.0) || !std::isfinite(l))
            throw std::invalid_argument("clip: lambda must be in (0, inf)");
    }
};

/// Step-size schedule. PolyDecay a0 / (1 + n / tau)^kappa with kappa in
/// (0.5, 1] satisfies the divergent-sum / square-summable conditions;
/// Constant does not and is flagged accordingly.
struct StepSchedule {
    enum class Tag { PolyDecay, Constant };

    Tag tag = Tag::PolyDecay;
    double a0 = 0.05;
    double tau = 1e4;
    double kappa = 0.75;

    static StepSchedule poly(double a0, double tau, double kappa) {
        if (!(a0 > 0.0) || !(tau > 0.0))
            throw std::invalid_argument("schedule: a0 and tau must be positive");
        if (!(kappa > 0.5) || !(kappa <= 1.0))
            throw std::invalid_argument("schedule: kappa must be in (0.5, 1]");
        StepSchedule s;
        s.tag = Tag::PolyDecay;
        s.a0 = a0;
        s.tau = tau;
        s.kappa = kappa;
        return s;
    }

    static StepSchedule constant(double a0) {
        if (!(a0 > 0.0)) throw std::invalid_argument("schedule: a0 must be positive");
        StepSchedule s;
        s.tag = Tag::Constant;
        s.a0 = a0;
        return s;
    }

    bool robbins_monro() const { return tag == Tag::PolyDecay; }
};

inline double schedule_value(const StepSchedule& s, std::int64_t n) {
    if (n < 0) throw std::invalid_argument("schedule_value: n must be >= 0");
    if (s.tag == StepSchedule::Tag::Constant) return s.a0;
    return s.a0 / std::pow(1.0 + static_cast<double>(n) / s.tau, s.kappa);
}

/// Sum of squared step sizes. For PolyDecay the full series Sum (1 + m/tau)^-2k
/// is an explicit prefix plus an Euler-Maclaurin tail (relative error well
/// under 1e-12); for Constant the series diverges and a finite horizon is
/// required. A nonnegative horizon restricts the sum to m < horizon.
inline double schedule_sum_sq(const StepSchedule& s, std::int64_t horizon = -1) {
    if (s.tag == StepSchedule::Tag::Constant) {
        if (horizon < 0)
            throw std::invalid_argument("schedule_sum_sq: constant schedule needs a horizon");
        return s.a0 * s.a0 * static_cast<double>(horizon);
    }
    const double p = 2.0 * s.kappa; // > 1, so the series converges
    auto term = [&](double m) { return std::pow(1.0 + m / s.tau, -p); };

    const std::int64_t prefix = horizon < 0 ? 65536 : std::min<std::int64_t>(horizon, 1 << 22);
    double sum = 0.0;
    for (std::int64_t m = 0; m < prefix; ++m) sum += term(static_cast<double>(m));
    if (horizon >= 0) {
        for (std::int64_t m = prefix; m < horizon; ++m) sum += term(static_cast<double>(m));
        return s.a0 * s.a0 * sum;
    }

    // Tail from m = prefix: integral + f/2 - f'/12 + f'''/720.
    const double a = static_cast<double>(prefix);
    const double base = 1.0 + a / s.tau;
    const double integral = s.tau / (p - 1.0) * std::pow(base, 1.0 - p);
    const double f = std::pow(base, -p);
    const double f1 = -p / s.tau * std::pow(base, -p - 1.0);
    const double f3 = -p * (p + 1.0) * (p + 2.0) / (s.tau * s.tau * s.tau) *
                      std::pow(base, -p - 3.0);
    sum += integral + 0.5 * f - f1 / 12.0 + f3 / 720.0;
    return s.a0 * s.a0 * sum;
}

struct OptimizerState {
    std::int64_t n = 0;
    StepSchedule schedule;
    ClipConfig clip;

    OptimizerState(StepSchedule s, ClipConfig c) : schedule(s), clip(c) {}

    double current_step_size() const { return schedule_value(schedule, n); }
};

/// Norm clipping g / (||g||/lambda v 1): identity when ||g|| <= lambda,
/// otherwise rescaled to norm lambda. Direction is always preserved.
inline Vector clip(const Vector& g, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("clip: lambda must be positive");
    if (!all_finite(g)) throw std::domain_error("clip: non-finite gradient");
    double n = norm2(g);
    Vector out = g;
    if (n > lambda) {
        double scale = lambda / n;
        for (double& v : out) v *= scale;
    }
    return out;
}

/// What a step applied: the step size and the norms of the two update
/// directions (the averaged clipped vb gradient and the averaged wu
/// gradient). The vb entry is <= lambda by construction.
struct StepInfo {
    double a_n = 0.0;
    double vb_update_norm = 0.0;
    double wu_update_norm = 0.0;
};

namespace detail {

inline void axpy_inner(ParamSet& p, double coeff, const Vector& flat_wu) {
    std::size_t k = 0;
    for (auto& lp : p.inner) {
        for (double& w : lp.W.a) w += coeff * flat_wu[k++];
        for (double& u : lp.u) u += coeff * flat_wu[k++];
    }
}

inline void axpy_output(ParamSet& p, double coeff, const Vector& flat_vb) {
    std::size_t k = 0;
    for (double& w : p.V.a) w += coeff * flat_vb[k++];
    for (double& bb : p.b) bb += coeff * flat_vb[k++];
}

inline void check_grad_layout(const ParamSet& p, const GradSplit& g) {
    std::size_t wu = 0;
    for (const auto& lp : p.inner) wu += lp.W.size() + lp.u.size();
    if (g.wu.size() != wu || g.vb.size() != p.V.size() + p.b.size())
        throw std::invalid_argument("step: gradient layout mismatch");
    if (!all_finite(g.wu) || !all_finite(g.vb))
        throw std::domain_error("step: non-finite gradient");
}

} // namespace detail

/// The two-track update: clipped gradient descent on the output block, plain
/// gradient descent on the inner block. Advances the step counter.
inline StepInfo step(ParamSet& p, const GradSplit& g, OptimizerState& st) {
    detail::check_grad_layout(p, g);
    StepInfo info;
    info.a_n = st.current_step_size();
    Vector gvb = clip(g.vb, st.clip.lambda);
    info.vb_update_norm = norm2(gvb);
    info.wu_update_norm = norm2(g.wu);
    detail::axpy_output(p, -info.a_n, gvb);
    detail::axpy_inner(p, -info.a_n, g.wu);
    ++st.n;
    return info;
}

/// Mini-batch variant: each sample's vb gradient is clipped before averaging,
/// wu gradients are averaged unclipped. The averaged vb direction keeps norm
/// <= lambda, so the per-step output displacement bound survives batching.
inline StepInfo step_minibatch(ParamSet& p, std::span<const GradSplit> grads,
                               OptimizerState& st) {
    if (grads.empty()) throw std::invalid_argument("step_minibatch: empty batch");
    for (const auto& g : grads) detail::check_grad_layout(p, g);

    const double inv_k = 1.0 / static_cast<double>(grads.size());
    Vector avg_vb(grads[0].vb.size(), 0.0);
    Vector avg_wu(grads[0].wu.size(), 0.0);
    for (const auto& g : grads) {
        Vector gvb = clip(g.vb, st.clip.lambda);
        for (std::size_t i = 0; i < avg_vb.size(); ++i) avg_vb[i] += inv_k * gvb[i];
        for (std::size_t i = 0; i < avg_wu.size(); ++i) avg_wu[i] += inv_k * g.wu[i];
    }

    StepInfo info;
    info.a_n = st.current_step_size();
    info.vb_update_norm = norm2(avg_vb);
    info.wu_update_norm = norm2(avg_wu);
    detail::axpy_output(p, -info.a_n, avg_vb);
    detail::axpy_inner(p, -info.a_n, avg_wu);
    ++st.n;
    return info;
}

/// Initialization honoring the norm precondition of the clipped update: each
/// weight is a zero-mean truncated Gaussian with scale 1/sqrt(fan_in) cut at
/// two scales, and the whole vector is rescaled to just under lambda if it
/// lands outside. ||theta(0)|| <= lambda always holds on return.
inline ParamSet init_params(const NetSpec& s, double lambda, std::uint64_t seed) {
    if (!(lambda > 0.0)) throw std::invalid_argument("init_params: lambda must be positive");
    s.validate();
    Rng rng(seed);
    ParamSet p = zero_params(s);
    for (std::size_t l = 0; l < p.inner.size(); ++l) {
        double sd = 1.0 / std::sqrt(static_cast<double>(s.hidden[l].in_dim));
        for (double& w : p.inner[l].W.a) w = rng.truncated_normal(sd, 2.0);
        for (double& u : p.inner[l].u) u = rng.truncated_normal(sd, 2.0);
    }
    double sd_head = 1.0 / std::sqrt(static_cast<double>(s.last_hidden_dim()));
    for (double& w : p.V.a) w = rng.truncated_normal(sd_head, 2.0);
    for (double& bb : p.b) bb = rng.truncated_normal(sd_head, 2.0);

    double total = param_norm(p).total;
    if (total > lambda) {
        double scale = lambda * (1.0 - 1e-9) / total;
        for (auto& lp : p.inner) {
            for (double& w : lp.W.a) w *= scale;
            for (double& u : lp.u) u *= scale;
        }
        for (double& w : p.V.a) w *= scale;
        for (double& bb : p.b) bb *= scale;
    }
    return p;
}

/// Config tag: "poly:a0:tau:kappa" | "const:a0".
inline StepSchedule parse_schedule(const std::string& tag) {
    std::stringstream ss(tag);
    std::string name;
    std::getline(ss, name, ':');
    auto num = [&] {
        std::string part;
        if (!std::getline(ss, part, ':'))
            throw std::invalid_argument("schedule tag '" + tag + "': missing field");
        std::size_t pos = 0;
        double v = std::stod(part, &pos);
        if (pos != part.size())
            throw std::invalid_argument("schedule tag '" + tag + "': bad number");
        return v;
    };
    if (name == "poly") {
        double a0 = num(), tau = num(), kappa = num();
        if (!ss.eof()) throw std::invalid_argument("schedule tag '" + tag + "': trailing fields");
        return StepSchedule::poly(a0, tau, kappa);
    }
    if (name == "const") {
        double a0 = num();
        if (!ss.eof()) throw std::invalid_argument("schedule tag '" + tag + "': trailing fields");
        return StepSchedule::constant(a0);
    }
    throw std::invalid_argument("unknown schedule tag '" + tag + "'");
}

inline std::string format_schedule(const StepSchedule& s) {
    std::ostringstream os;
    if (s.tag == StepSchedule::Tag::Constant) {
        os << "const:" << s.a0;
    } else {
        os << "poly:" << s.a0 << ":" << s.tau << ":" << s.kappa;
    }
    return os.str();
}

} // namespace clipsgd
