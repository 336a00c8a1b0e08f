#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipsgd/activations.hpp"
#include "clipsgd/matrix.hpp"

namespace clipsgd {

struct LayerSpec {
    int in_dim = 0;
    int out_dim = 0;
    ActivationKind activation;

    LayerSpec() = default;
    LayerSpec(int in, int out, ActivationKind act) : in_dim(in), out_dim(out), activation(act) {
        if (in <= 0 || out <= 0) throw std::invalid_argument("LayerSpec: dims must be positive");
    }

    bool operator==(const LayerSpec&) const = default;
};

/// Output head: a scalar regression value, k softmax class probabilities, or
/// M action values. In every case the head itself is a linear map on the last
/// hidden activation; softmax is applied on top of its logits.
struct HeadKind {
    enum class Tag { Scalar, Softmax, QValues };

    Tag tag = Tag::Scalar;
    int dim = 1; // class count k or action count M; 1 for Scalar

    static HeadKind scalar() { return {Tag::Scalar, 1}; }
    static HeadKind softmax(int k) {
        if (k < 2) throw std::invalid_argument("softmax head: class count must be >= 2");
        return {Tag::Softmax, k};
    }
    static HeadKind q_values(int m) {
        if (m < 1) throw std::invalid_argument("q head: action count must be >= 1");
        return {Tag::QValues, m};
    }

    bool operator==(const HeadKind&) const = default;
};

/// Architecture without parameters: input dim, hidden layers, head.
struct NetSpec {
    int input_dim = 0;
    std::vector<LayerSpec> hidden;
    HeadKind head;

    void validate() const {
        if (input_dim <= 0) throw std::invalid_argument("NetSpec: input_dim must be positive");
        if (hidden.empty())
            throw std::invalid_argument("NetSpec: at least one hidden layer required");
        int d = input_dim;
        for (const auto& l : hidden) {
            if (l.in_dim != d) throw std::invalid_argument("NetSpec: layer dims do not chain");
            d = l.out_dim;
        }
    }

    int last_hidden_dim() const { return hidden.back().out_dim; }
    int head_dim() const { return head.dim; }

    bool operator==(const NetSpec&) const = default;
};

struct LayerParams {
    Matrix W; // out_dim x in_dim
    Vector u; // out_dim
};

/// Network weights with the explicit split into inner parameters (all hidden
/// W, u) and output-layer parameters (head V, b). The two blocks are what the
/// two-track update and all stability bookkeeping operate on.
struct ParamSet {
    std::vector<LayerParams> inner;
    Matrix V; // head_dim x last_hidden_dim
    Vector b; // head_dim

    bool operator==(const ParamSet&) const = default;
};

struct Mlp {
    NetSpec spec;
    ParamSet params;
};

/// Loss gradient split to mirror ParamSet: vb aligned with (V, b) flattened
/// row-major V then b; wu aligned with the hidden layers in order, each W
/// row-major then u.
struct GradSplit {
    Vector vb;
    Vector wu;
};

inline std::size_t inner_param_count(const NetSpec& s) {
    std::size_t n = 0;
    for (const auto& l : s.hidden)
        n += static_cast<std::size_t>(l.out_dim) * l.in_dim + l.out_dim;
    return n;
}

inline std::size_t output_param_count(const NetSpec& s) {
    return static_cast<std::size_t>(s.head_dim()) * s.last_hidden_dim() + s.head_dim();
}

inline ParamSet zero_params(const NetSpec& s) {
    s.validate();
    ParamSet p;
    for (const auto& l : s.hidden) {
        LayerParams lp;
        lp.W = Matrix(l.out_dim, l.in_dim);
        lp.u.assign(l.out_dim, 0.0);
        p.inner.push_back(std::move(lp));
    }
    p.V = Matrix(s.head_dim(), s.last_hidden_dim());
    p.b.assign(s.head_dim(), 0.0);
    return p;
}

inline void check_layout(const NetSpec& s, const ParamSet& p) {
    if (p.inner.size() != s.hidden.size())
        throw std::invalid_argument("params: hidden layer count mismatch");
    for (std::size_t i = 0; i < p.inner.size(); ++i) {
        const auto& l = s.hidden[i];
        if (p.inner[i].W.rows != l.out_dim || p.inner[i].W.cols != l.in_dim ||
            static_cast<int>(p.inner[i].u.size()) != l.out_dim)
            throw std::invalid_argument("params: layer " + std::to_string(i) + " shape mismatch");
    }
    if (p.V.rows != s.head_dim() || p.V.cols != s.last_hidden_dim() ||
        static_cast<int>(p.b.size()) != s.head_dim())
        throw std::invalid_argument("params: head shape mismatch");
}

struct ParamNorms {
    double total = 0.0;
    double vb = 0.0;
    double wu = 0.0;
};

inline ParamNorms param_norm(const ParamSet& p) {
    double wu_sq = 0.0;
    for (const auto& lp : p.inner) {
        for (double v : lp.W.a) wu_sq += v * v;
        wu_sq += norm2_sq(lp.u);
    }
    double vb_sq = 0.0;
    for (double v : p.V.a) vb_sq += v * v;
    vb_sq += norm2_sq(p.b);
    ParamNorms n;
    n.vb = std::sqrt(vb_sq);
    n.wu = std::sqrt(wu_sq);
    n.total = std::sqrt(vb_sq + wu_sq);
    return n;
}

inline Vector flatten_inner(const ParamSet& p) {
    Vector v;
    for (const auto& lp : p.inner) {
        v.insert(v.end(), lp.W.a.begin(), lp.W.a.end());
        v.insert(v.end(), lp.u.begin(), lp.u.end());
    }
    return v;
}

inline Vector flatten_output(const ParamSet& p) {
    Vector v(p.V.a.begin(), p.V.a.end());
    v.insert(v.end(), p.b.begin(), p.b.end());
    return v;
}

/// Full flatten: inner block first, then output block.
inline Vector flatten(const ParamSet& p) {
    Vector v = flatten_inner(p);
    Vector o = flatten_output(p);
    v.insert(v.end(), o.begin(), o.end());
    return v;
}

/// Inverse of flatten for a given layout.
inline ParamSet load_params(const NetSpec& s, const Vector& flat) {
    s.validate();
    if (flat.size() != inner_param_count(s) + output_param_count(s))
        throw std::invalid_argument("load_params: length mismatch");
    ParamSet p = zero_params(s);
    std::size_t k = 0;
    for (auto& lp : p.inner) {
        for (double& w : lp.W.a) w = flat[k++];
        for (double& u : lp.u) u = flat[k++];
    }
    for (double& w : p.V.a) w = flat[k++];
    for (double& bb : p.b) bb = flat[k++];
    return p;
}

/// Per-call forward state kept for backprop: layer inputs, pre-activations,
/// activations, and (optionally) activation derivatives evaluated during the
/// same pass.
struct ForwardCache {
    Vector input;
    std::vector<Vector> pre;   // per hidden layer
    std::vector<Vector> post;  // per hidden layer
    std::vector<Vector> dpost; // per hidden layer; empty if not requested
    Vector logits;             // head linear output
};

struct HeadOutput {
    Vector values; // f (len 1), class probabilities, or Q-values
    Vector logits; // head linear output; equals values except for Softmax
};

namespace detail {

inline void affine(const Matrix& W, const Vector& u, const Vector& x, Vector& out) {
    out.resize(W.rows);
    const double* w = W.a.data();
    for (int r = 0; r < W.rows; ++r) {
        double s = u[r];
        for (int c = 0; c < W.cols; ++c) s += w[c] * x[c];
        out[r] = s;
        w += W.cols;
    }
}

inline void check_layer_finite(const Vector& v, const char* stage, int layer) {
    for (double x : v)
        if (!std::isfinite(x))
            throw numeric_error(std::string("forward: non-finite value at ") + stage + " of layer " +
                                std::to_string(layer));
}

} // namespace detail

/// Softmax with max subtraction. Result sums to 1 up to rounding.
inline Vector softmax(const Vector& logits) {
    double m = logits[0];
    for (double c : logits) m = std::max(m, c);
    Vector z(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = std::exp(logits[i] - m);
        sum += z[i];
    }
    for (double& v : z) v /= sum;
    return z;
}

/// log(sum(exp(c))) computed stably; -log softmax(c)[y] = logsumexp(c) - c[y].
inline double logsumexp(const Vector& logits) {
    double m = logits[0];
    for (double c : logits) m = std::max(m, c);
    double s = 0.0;
    for (double c : logits) s += std::exp(c - m);
    return m + std::log(s);
}

/// Forward pass. want_grad_cache additionally records activation derivatives
/// so a following backprop does not re-evaluate the activations.
inline HeadOutput forward(const Mlp& net, const Vector& x, ForwardCache* cache = nullptr,
                          bool want_grad_cache = false) {
    check_layout(net.spec, net.params);
    if (static_cast<int>(x.size()) != net.spec.input_dim)
        throw std::invalid_argument("forward: input dimension mismatch");

    const std::size_t L = net.spec.hidden.size();
    if (cache) {
        cache->input = x;
        cache->pre.assign(L, {});
        cache->post.assign(L, {});
        cache->dpost.assign(want_grad_cache ? L : 0, {});
    }

    Vector cur = x;
    Vector pre;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& lp = net.params.inner[l];
        const auto& act = net.spec.hidden[l].activation;
        detail::affine(lp.W, lp.u, cur, pre);
        detail::check_layer_finite(pre, "pre-activation", static_cast<int>(l));
        Vector post(pre.size());
        if (want_grad_cache) {
            Vector dp(pre.size());
            for (std::size_t i = 0; i < pre.size(); ++i)
                act_eval_deriv(act, pre[i], post[i], dp[i]);
            cache->dpost[l] = std::move(dp);
        } else {
            for (std::size_t i = 0; i < pre.size(); ++i) post[i] = act_eval(act, pre[i]);
        }
        detail::check_layer_finite(post, "activation", static_cast<int>(l));
        if (cache) {
            cache->pre[l] = pre;
            cache->post[l] = post;
        }
        cur = std::move(post);
    }

    HeadOutput out;
    detail::affine(net.params.V, net.params.b, cur, out.logits);
    detail::check_layer_finite(out.logits, "head", static_cast<int>(L));
    if (cache) cache->logits = out.logits;
    out.values = net.spec.head.tag == HeadKind::Tag::Softmax ? softmax(out.logits) : out.logits;
    return out;
}

/// Reverse-mode gradient of <head_grad, head logits> with respect to the
/// parameters, split into the (V, b) and (W, u) blocks. Requires a cache from
/// forward(..., want_grad_cache=true) for the same net and input.
///
/// inner_signal_override, when nonempty, replaces the usual V^T head_grad as
/// the signal entering the last hidden layer; the printed-formula loss
/// variants use it.
inline GradSplit backprop(const Mlp& net, const ForwardCache& cache, const Vector& head_grad,
                          const Vector* inner_signal_override = nullptr) {
    const NetSpec& s = net.spec;
    const std::size_t L = s.hidden.size();
    if (cache.pre.size() != L || cache.post.size() != L || cache.dpost.size() != L ||
        static_cast<int>(cache.input.size()) != s.input_dim)
        throw std::invalid_argument("backprop: forward cache missing or mismatched");
    if (static_cast<int>(head_grad.size()) != s.head_dim())
        throw std::invalid_argument("backprop: head_grad dimension mismatch");

    GradSplit g;
    g.vb.assign(output_param_count(s), 0.0);
    g.wu.assign(inner_param_count(s), 0.0);

    // Output block: dV = head_grad outer post_L, db = head_grad.
    const Vector& hL = cache.post[L - 1];
    const int hd = s.head_dim(), hn = s.last_hidden_dim();
    for (int i = 0; i < hd; ++i)
        for (int j = 0; j < hn; ++j) g.vb[static_cast<std::size_t>(i) * hn + j] = head_grad[i] * hL[j];
    for (int i = 0; i < hd; ++i) g.vb[static_cast<std::size_t>(hd) * hn + i] = head_grad[i];

    // Signal entering the last hidden layer.
    Vector sig(hn, 0.0);
    if (inner_signal_override) {
        if (static_cast<int>(inner_signal_override->size()) != hn)
            throw std::invalid_argument("backprop: inner signal dimension mismatch");
        sig = *inner_signal_override;
    } else {
        for (int i = 0; i < hd; ++i) {
            const double gi = head_grad[i];
            for (int j = 0; j < hn; ++j) sig[j] += gi * net.params.V(i, j);
        }
    }

    // Hidden layers, last to first. wu offsets walk backwards.
    std::size_t off = g.wu.size();
    for (std::size_t l = L; l-- > 0;) {
        const auto& lp = net.params.inner[l];
        const Vector& in = l == 0 ? cache.input : cache.post[l - 1];
        const int rows = lp.W.rows, cols = lp.W.cols;
        off -= static_cast<std::size_t>(rows) * cols + rows;

        Vector t(rows);
        for (int r = 0; r < rows; ++r) t[r] = sig[r] * cache.dpost[l][r];

        double* gw = g.wu.data() + off;
        for (int r = 0; r < rows; ++r) {
            const double tr = t[r];
            for (int c = 0; c < cols; ++c) gw[static_cast<std::size_t>(r) * cols + c] = tr * in[c];
        }
        double* gu = g.wu.data() + off + static_cast<std::size_t>(rows) * cols;
        for (int r = 0; r < rows; ++r) gu[r] = t[r];

        if (l > 0) {
            Vector next(cols, 0.0);
            for (int r = 0; r < rows; ++r) {
                const double tr = t[r];
                for (int c = 0; c < cols; ++c) next[c] += tr * lp.W(r, c);
            }
            sig = std::move(next);
        }
    }
    return g;
}

} // namespace clipsgd
