#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipsgd/math.hpp"
#include "clipsgd/network.hpp"

namespace clipsgd {

/// Running stability envelopes for one training run.
///
/// psi_vb dominates the supremum of observed output-block norms because the
/// block moves by a(m) * ||g(m)|| per step and psi_vb accumulates exactly
/// those amounts on top of the initial norm. psi_wu does the same for the
/// inner block using the gradient growth bound K (1 + ||theta_vb||^2) instead
/// of the observed gradient; qv is its quadratic variation. Dominance is
/// asserted on every update and a violation means the optimizer or the
/// constant K is wrong, so it is raised as an invariant breach rather than
/// recorded.
struct SubmartingaleTracker {
    double psi_vb = 0.0;
    double psi_wu = 0.0;
    double qv = 0.0;
    std::int64_t n = 0;
    double sup_norm_vb = 0.0;
    double sup_norm_wu = 0.0;
    double K = 0.0;      // Lemma growth constant for the wu envelope
    double lambda = 0.0; // clipping constant, bounds every vb increment
    double S = 0.0;      // running sum of a(m)^2

    static constexpr double kSlack = 1e-12;

    SubmartingaleTracker(double initial_vb_norm, double initial_wu_norm, double K_,
                         double lambda_)
        : psi_vb(initial_vb_norm), psi_wu(initial_wu_norm), sup_norm_vb(initial_vb_norm),
          sup_norm_wu(initial_wu_norm), K(K_), lambda(lambda_) {
        if (!(K > 0.0) || !(lambda > 0.0))
            throw std::invalid_argument("tracker: K and lambda must be positive");
    }
};

/// Advance the output-layer envelope by one optimizer step.
/// clipped_grad_norm is the norm of the applied (clipped, batch-averaged)
/// update direction; vb_norm is the block norm observed after the step.
inline void update_psi_vb(SubmartingaleTracker& t, double a_n, double clipped_grad_norm,
                          double vb_norm) {
    if (!(clipped_grad_norm <= t.lambda + SubmartingaleTracker::kSlack) ||
        !std::isfinite(clipped_grad_norm))
        throw invariant_breach("psi_vb: clipped gradient norm " +
                               std::to_string(clipped_grad_norm) + " exceeds lambda " +
                               std::to_string(t.lambda));
    t.psi_vb += a_n * clipped_grad_norm;
    t.S += a_n * a_n;
    if (vb_norm > t.sup_norm_vb) t.sup_norm_vb = vb_norm;
    if (t.psi_vb < t.sup_norm_vb - SubmartingaleTracker::kSlack * (1.0 + t.sup_norm_vb))
        throw invariant_breach("psi_vb envelope fell below observed sup norm at step " +
                               std::to_string(t.n));
}

/// Advance the inner-layer envelope. vb_norm_before is the output-block norm
/// at which the gradient was computed; wu_norm is observed after the step.
/// Completes one tracked step together with update_psi_vb.
inline void update_psi_wu(SubmartingaleTracker& t, double a_n, double vb_norm_before,
                          double wu_norm) {
    double growth = t.K * (1.0 + vb_norm_before * vb_norm_before);
    t.psi_wu += a_n * growth;
    t.qv += a_n * a_n * growth * growth;
    if (wu_norm > t.sup_norm_wu) t.sup_norm_wu = wu_norm;
    if (t.psi_wu < t.sup_norm_wu - SubmartingaleTracker::kSlack * (1.0 + t.sup_norm_wu))
        throw invariant_breach("psi_wu envelope fell below observed sup norm at step " +
                               std::to_string(t.n));
    ++t.n;
}

/// Tail bound exp(-x^2 / (lambda^2 S)) on P(psi_vb(n) >= x), with
/// S = sum of a(m)^2 over the whole schedule.
inline double ha_tail_bound(double x, double lambda, double S) {
    if (!(x >= 0.0) || !(lambda > 0.0) || !(S > 0.0))
        throw std::invalid_argument("ha_tail_bound: need x >= 0, lambda > 0, S > 0");
    return std::exp(-x * x / (lambda * lambda * S));
}

/// k-th moment bound B(k) = k Int_0^inf x^(k-1) exp(-x^2/(lambda^2 S)) dx,
/// evaluated by adaptive quadrature and cross-checked against the Gamma
/// closed form (k/2) (lambda^2 S)^(k/2) Gamma(k/2) to 1e-8 relative.
inline double moment_bound_B_closed_form(int k, double lambda, double S) {
    if (k < 1 || !(lambda > 0.0) || !(S > 0.0))
        throw std::invalid_argument("moment_bound_B: need k >= 1, lambda > 0, S > 0");
    double c = lambda * lambda * S;
    return 0.5 * k * std::pow(c, 0.5 * k) * std::tgamma(0.5 * k);
}

inline double moment_bound_B(int k, double lambda, double S) {
    double closed = moment_bound_B_closed_form(k, lambda, S);
    double scale = lambda * std::sqrt(S);
    // substitute x = scale * u so the integrand is O(1)-supported on [0, ~8]
    double upper = std::sqrt(40.0 + 10.0 * k);
    auto integrand = [&](double u) {
        return std::pow(u, k - 1) * std::exp(-u * u);
    };
    double integral = integrate(integrand, 0.0, upper, 1e-14);
    double quad = k * std::pow(scale, k) * integral;
    if (std::abs(quad - closed) > 1e-8 * closed)
        throw numeric_error("moment_bound_B: quadrature disagrees with closed form");
    return quad;
}

/// Growth constant K for the Lemma bounds |f| <= K (1 + ||vb||),
/// ||grad_vb|| <= K (1 + ||vb||) and ||grad_wu|| <= K (1 + ||vb||^2), for
/// inputs confined to [-x_max, x_max]^d and targets to [-y_max, y_max].
/// Deliberately conservative; only the inequalities are promised.
inline double lemma_constant_K(const NetSpec& s, double x_max, double y_max) {
    s.validate();
    double s_max = 0.0, g_max = 0.0;
    for (const auto& l : s.hidden) {
        if (!l.activation.squashing())
            throw std::invalid_argument("lemma_constant_K: squashing activations required");
        auto [lo, hi] = act_range(l.activation);
        s_max = std::max(s_max, std::max(std::abs(lo), std::abs(hi)));
        g_max = std::max(g_max, act_deriv_bound(l.activation));
    }
    double h = 0.0;
    for (const auto& l : s.hidden) h = std::max(h, static_cast<double>(l.out_dim));
    double d = static_cast<double>(s.input_dim);
    return 3.0 * (std::sqrt(h) * s_max + 1.0 + y_max) * g_max *
           std::sqrt(h * (d * x_max * x_max + 1.0));
}

struct MomentReport {
    int k = 0;
    double empirical = 0.0; // mean of (sup norm)^k across runs
    double bound = 0.0;     // B(k)
    int runs = 0;
};

/// Empirical k-th moment of the final running supremum across runs, paired
/// with the theoretical bound B(k).
inline MomentReport empirical_moments(std::span<const double> final_sup_norms, int k,
                                      double lambda, double S) {
    if (final_sup_norms.empty()) throw std::invalid_argument("empirical_moments: no runs");
    MomentReport r;
    r.k = k;
    r.runs = static_cast<int>(final_sup_norms.size());
    double acc = 0.0;
    for (double v : final_sup_norms) acc += std::pow(v, k);
    r.empirical = acc / static_cast<double>(r.runs);
    r.bound = moment_bound_B(k, lambda, S);
    return r;
}

} // namespace clipsgd
