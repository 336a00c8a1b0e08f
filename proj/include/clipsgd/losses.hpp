#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "clipsgd/network.hpp"

namespace clipsgd {

/// Gradient mode. Standard is the derivative validated against the loss by
/// finite differences; PaperLiteral reproduces the printed closed forms for
/// the binary cross-entropy logit gradient and the Bellman inner-layer sum,
/// kept behind this flag for fidelity experiments.
enum class GradMode { Standard, PaperLiteral };

inline GradMode parse_grad_mode(const std::string& s) {
    if (s == "standard") return GradMode::Standard;
    if (s == "paper") return GradMode::PaperLiteral;
    throw std::invalid_argument("unknown grad mode '" + s + "'");
}

struct MseResult {
    double loss = 0.0;
    double f = 0.0;
    GradSplit grad;
};

/// Squared-error loss (f(x, theta) - y)^2 and its split gradient.
inline MseResult mse_loss_grad(const Mlp& net, const Vector& x, double y) {
    if (net.spec.head.tag != HeadKind::Tag::Scalar)
        throw std::invalid_argument("mse_loss_grad: scalar head required");
    require_finite(y, "mse_loss_grad target");
    ForwardCache cache;
    HeadOutput out = forward(net, x, &cache, true);
    MseResult r;
    r.f = out.values[0];
    double d = r.f - y;
    r.loss = d * d;
    r.grad = backprop(net, cache, Vector{2.0 * d});
    return r;
}

struct CeResult {
    double loss = 0.0;
    Vector probs;
    GradSplit grad;
};

/// Cross-entropy loss -log z_y over softmax probabilities, with the logit
/// gradient z - onehot(y) (Standard) or the printed binary form z_i - z_i'
/// (PaperLiteral, binary only).
inline CeResult ce_loss_grad(const Mlp& net, const Vector& x, int y,
                             GradMode mode = GradMode::Standard) {
    if (net.spec.head.tag != HeadKind::Tag::Softmax)
        throw std::invalid_argument("ce_loss_grad: softmax head required");
    const int k = net.spec.head_dim();
    if (y < 0 || y >= k) throw std::invalid_argument("ce_loss_grad: label out of range");
    if (mode == GradMode::PaperLiteral && k != 2)
        throw std::invalid_argument("ce_loss_grad: paper-literal gradient is binary only");

    ForwardCache cache;
    HeadOutput out = forward(net, x, &cache, true);
    CeResult r;
    r.probs = out.values;
    r.loss = logsumexp(out.logits) - out.logits[y];

    Vector hg(k);
    if (mode == GradMode::Standard) {
        for (int i = 0; i < k; ++i) hg[i] = r.probs[i] - (i == y ? 1.0 : 0.0);
    } else {
        hg[0] = r.probs[0] - r.probs[1];
        hg[1] = r.probs[1] - r.probs[0];
    }
    r.grad = backprop(net, cache, hg);
    return r;
}

/// Bellman target r + gamma * max_a' Q(x', a'), or r alone on terminal
/// transitions. The target is a constant: no gradient flows through it.
inline double bellman_target(const Mlp& net_for_target, const Vector& x_next, double r,
                             double gamma, bool done) {
    if (net_for_target.spec.head.tag != HeadKind::Tag::QValues)
        throw std::invalid_argument("bellman_target: q-values head required");
    if (done) return r;
    HeadOutput out = forward(net_for_target, x_next);
    double q_max = out.values[0];
    for (double q : out.values) q_max = std::max(q_max, q);
    return r + gamma * q_max;
}

struct BellmanResult {
    double loss = 0.0;
    double q_sa = 0.0;
    GradSplit grad;
};

/// Sample Bellman loss (Q(x, a) - target)^2 for a frozen target. Standard
/// mode differentiates the acted coordinate only; PaperLiteral feeds the
/// printed sum over all action rows of V into the hidden layers while the
/// output block stays on row a.
inline BellmanResult bellman_loss_grad(const Mlp& net, const Vector& x, int a, double target,
                                       GradMode mode = GradMode::Standard) {
    if (net.spec.head.tag != HeadKind::Tag::QValues)
        throw std::invalid_argument("bellman_loss_grad: q-values head required");
    const int m = net.spec.head_dim();
    if (a < 0 || a >= m) throw std::invalid_argument("bellman_loss_grad: action out of range");
    require_finite(target, "bellman_loss_grad target");

    ForwardCache cache;
    HeadOutput out = forward(net, x, &cache, true);
    BellmanResult r;
    r.q_sa = out.values[a];
    double delta = r.q_sa - target;
    r.loss = delta * delta;

    Vector hg(m, 0.0);
    hg[a] = 2.0 * delta;
    if (mode == GradMode::Standard) {
        r.grad = backprop(net, cache, hg);
    } else {
        const int hn = net.spec.last_hidden_dim();
        Vector sig(hn, 0.0);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < hn; ++j) sig[j] += net.params.V(i, j);
        for (double& sj : sig) sj *= 2.0 * delta;
        r.grad = backprop(net, cache, hg, &sig);
    }
    return r;
}

/// Bound on ||grad_vb|| of the cross-entropy loss for squashing activations:
/// sqrt(2 (h s_max^2 + 1)) with s_max the largest range endpoint magnitude of
/// the last hidden layer. Holds for any parameters and label.
inline double ce_vb_grad_bound(const NetSpec& s) {
    const auto& act = s.hidden.back().activation;
    if (!act.squashing())
        throw std::invalid_argument("ce_vb_grad_bound: squashing activation required");
    auto [lo, hi] = act_range(act);
    double s_max = std::max(std::abs(lo), std::abs(hi));
    double h = static_cast<double>(s.last_hidden_dim());
    return std::sqrt(2.0 * (h * s_max * s_max + 1.0));
}

} // namespace clipsgd
