#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "clipsgd/math.hpp"

namespace clipsgd {

/// Scalar activation descriptor. All squashing kinds have a compact range and
/// a bounded derivative; Gelu is carried only as the unbounded baseline and is
/// rejected wherever a squashing activation is required.
struct ActivationKind {
    enum class Tag { Sigmoid, Tanh, ScaledTanh, Gelu, TGelu };

    Tag tag = Tag::Tanh;
    double a = 1.0;    // ScaledTanh scale, a >= 1
    double t_l = 0.0;  // TGelu left threshold, <= 0
    double t_r = 0.0;  // TGelu right threshold, >= 0

    static ActivationKind sigmoid() { return {Tag::Sigmoid}; }
    static ActivationKind tanh() { return {Tag::Tanh}; }

    static ActivationKind scaled_tanh(double a) {
        if (!(a >= 1.0)) throw std::invalid_argument("stanh: scale must be >= 1");
        ActivationKind k{Tag::ScaledTanh};
        k.a = a;
        return k;
    }

    static ActivationKind gelu() { return {Tag::Gelu}; }

    static ActivationKind tgelu(double t_l, double t_r) {
        if (!(t_l <= 0.0) || !(t_r >= 0.0))
            throw std::invalid_argument("tgelu: requires t_l <= 0 <= t_r");
        ActivationKind k{Tag::TGelu};
        k.t_l = t_l;
        k.t_r = t_r;
        return k;
    }

    bool squashing() const { return tag != Tag::Gelu; }

    bool operator==(const ActivationKind&) const = default;
};

/// sigma(x)
inline double act_eval(const ActivationKind& k, double x) {
    require_finite(x, "act_eval");
    switch (k.tag) {
    case ActivationKind::Tag::Sigmoid:
        return 1.0 / (1.0 + std::exp(-x));
    case ActivationKind::Tag::Tanh:
        return std::tanh(x);
    case ActivationKind::Tag::ScaledTanh:
        return k.a * std::tanh(x / k.a);
    case ActivationKind::Tag::Gelu:
        return x * norm_cdf(x);
    case ActivationKind::Tag::TGelu:
        if (x >= k.t_r) return k.t_r * norm_cdf(k.t_r) + (x - k.t_r) * (1.0 - norm_cdf(x - k.t_r));
        if (x >= 0.0) return x * norm_cdf(x);
        if (x >= k.t_l) return x * (1.0 - norm_cdf(x));
        return k.t_l * (1.0 - norm_cdf(k.t_l)) + (x - k.t_l) * norm_cdf(x - k.t_l);
    }
    throw std::logic_error("act_eval: bad tag");
}

/// dsigma/dx. At a tGELU branch boundary the branch below the point wins;
/// act_deriv_one_sided exposes both limits for debugging.
inline double act_deriv(const ActivationKind& k, double x) {
    require_finite(x, "act_deriv");
    switch (k.tag) {
    case ActivationKind::Tag::Sigmoid: {
        double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
    }
    case ActivationKind::Tag::Tanh: {
        double t = std::tanh(x);
        return 1.0 - t * t;
    }
    case ActivationKind::Tag::ScaledTanh: {
        double t = std::tanh(x / k.a);
        return 1.0 - t * t;
    }
    case ActivationKind::Tag::Gelu:
        return norm_cdf(x) + x * norm_pdf(x);
    case ActivationKind::Tag::TGelu:
        if (x > k.t_r) {
            double u = x - k.t_r;
            return (1.0 - norm_cdf(u)) - u * norm_pdf(u);
        }
        if (x > 0.0) return norm_cdf(x) + x * norm_pdf(x);
        if (x > k.t_l) return (1.0 - norm_cdf(x)) - x * norm_pdf(x);
        {
            double u = x - k.t_l;
            return norm_cdf(u) + u * norm_pdf(u);
        }
    }
    throw std::logic_error("act_deriv: bad tag");
}

/// One-sided derivative limits (from below, from above) at x. They differ only
/// for tGELU at t_l, 0, t_r; elsewhere both equal act_deriv.
inline std::pair<double, double> act_deriv_one_sided(const ActivationKind& k, double x) {
    if (k.tag != ActivationKind::Tag::TGelu) {
        double d = act_deriv(k, x);
        return {d, d};
    }
    auto branch_deriv = [&](double xe, int branch) {
        switch (branch) {
        case 0: { double u = xe - k.t_l; return norm_cdf(u) + u * norm_pdf(u); }
        case 1: return (1.0 - norm_cdf(xe)) - xe * norm_pdf(xe);
        case 2: return norm_cdf(xe) + xe * norm_pdf(xe);
        default: { double u = xe - k.t_r; return (1.0 - norm_cdf(u)) - u * norm_pdf(u); }
        }
    };
    int below = x <= k.t_l ? 0 : (x <= 0.0 ? 1 : (x <= k.t_r ? 2 : 3));
    int above = x < k.t_l ? 0 : (x < 0.0 ? 1 : (x < k.t_r ? 2 : 3));
    return {branch_deriv(x, below), branch_deriv(x, above)};
}

namespace detail {
/// max over u >= 0 of u * (1 - Phi(u)), the overshoot of the tGELU tail branch.
inline double tgelu_tail_overshoot() {
    static const double v =
        grid_maximize([](double u) { return u * (1.0 - norm_cdf(u)); }, 0.0, 8.0);
    return v;
}
} // namespace detail

/// Range bounds (lo, hi) with lo <= sigma(x) <= hi for all x. Gelu reports
/// hi = +inf; use ActivationKind::squashing() to gate on compactness.
inline std::pair<double, double> act_range(const ActivationKind& k) {
    switch (k.tag) {
    case ActivationKind::Tag::Sigmoid: return {0.0, 1.0};
    case ActivationKind::Tag::Tanh: return {-1.0, 1.0};
    case ActivationKind::Tag::ScaledTanh: return {-k.a, k.a};
    case ActivationKind::Tag::Gelu:
        return {-detail::tgelu_tail_overshoot(), std::numeric_limits<double>::infinity()};
    case ActivationKind::Tag::TGelu: {
        double over = detail::tgelu_tail_overshoot();
        return {k.t_l * (1.0 - norm_cdf(k.t_l)) - over, k.t_r * norm_cdf(k.t_r) + over};
    }
    }
    throw std::logic_error("act_range: bad tag");
}

/// Bound g_max with |act_deriv(k, x)| <= g_max for all x. Closed form where
/// one exists; tGELU and Gelu are maximized on a dense grid over
/// [t_l - 6, t_r + 6] and padded by 1%.
inline double act_deriv_bound(const ActivationKind& k) {
    switch (k.tag) {
    case ActivationKind::Tag::Sigmoid: return 0.25;
    case ActivationKind::Tag::Tanh: return 1.0;
    case ActivationKind::Tag::ScaledTanh: return 1.0;
    case ActivationKind::Tag::Gelu:
    case ActivationKind::Tag::TGelu: {
        double lo = (k.tag == ActivationKind::Tag::TGelu ? k.t_l : -2.0) - 6.0;
        double hi = (k.tag == ActivationKind::Tag::TGelu ? k.t_r : 2.0) + 6.0;
        double m = grid_maximize([&](double x) { return std::abs(act_deriv(k, x)); }, lo, hi,
                                 1 << 16);
        return 1.01 * m;
    }
    }
    throw std::logic_error("act_deriv_bound: bad tag");
}

/// Config tag: "sigmoid" | "tanh" | "stanh:a" | "gelu" | "tgelu:t_l:t_r".
inline ActivationKind parse_activation(const std::string& tag) {
    auto split = [](const std::string& s) {
        std::vector<std::string> parts;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ':')) parts.push_back(item);
        return parts;
    };
    auto num = [&](const std::string& s) {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("activation tag: bad number '" + s + "'");
        return v;
    };
    auto parts = split(tag);
    if (parts.empty()) throw std::invalid_argument("empty activation tag");
    const std::string& name = parts[0];
    if (name == "sigmoid" && parts.size() == 1) return ActivationKind::sigmoid();
    if (name == "tanh" && parts.size() == 1) return ActivationKind::tanh();
    if (name == "gelu" && parts.size() == 1) return ActivationKind::gelu();
    if (name == "stanh" && parts.size() == 2) return ActivationKind::scaled_tanh(num(parts[1]));
    if (name == "tgelu" && parts.size() == 3)
        return ActivationKind::tgelu(num(parts[1]), num(parts[2]));
    throw std::invalid_argument("unknown activation tag '" + tag + "'");
}

inline std::string format_activation(const ActivationKind& k) {
    auto fmt = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    switch (k.tag) {
    case ActivationKind::Tag::Sigmoid: return "sigmoid";
    case ActivationKind::Tag::Tanh: return "tanh";
    case ActivationKind::Tag::ScaledTanh: return "stanh:" + fmt(k.a);
    case ActivationKind::Tag::Gelu: return "gelu";
    case ActivationKind::Tag::TGelu: return "tgelu:" + fmt(k.t_l) + ":" + fmt(k.t_r);
    }
    throw std::logic_error("format_activation: bad tag");
}

/// Value and derivative together. Shares the expensive Phi evaluation between
/// the two, which matters in the training inner loop.
inline void act_eval_deriv(const ActivationKind& k, double x, double& value, double& deriv) {
    switch (k.tag) {
    case ActivationKind::Tag::Sigmoid: {
        double s = 1.0 / (1.0 + std::exp(-x));
        value = s;
        deriv = s * (1.0 - s);
        return;
    }
    case ActivationKind::Tag::Tanh: {
        double t = std::tanh(x);
        value = t;
        deriv = 1.0 - t * t;
        return;
    }
    case ActivationKind::Tag::ScaledTanh: {
        double t = std::tanh(x / k.a);
        value = k.a * t;
        deriv = 1.0 - t * t;
        return;
    }
    case ActivationKind::Tag::Gelu: {
        double c = norm_cdf(x);
        value = x * c;
        deriv = c + x * norm_pdf(x);
        return;
    }
    case ActivationKind::Tag::TGelu: {
        if (x > k.t_r) {
            double u = x - k.t_r;
            double c = norm_cdf(u);
            value = k.t_r * norm_cdf(k.t_r) + u * (1.0 - c);
            deriv = (1.0 - c) - u * norm_pdf(u);
        } else if (x > 0.0) {
            double c = norm_cdf(x);
            value = x * c;
            deriv = c + x * norm_pdf(x);
        } else if (x > k.t_l) {
            double c = norm_cdf(x);
            value = x * (1.0 - c);
            deriv = (1.0 - c) - x * norm_pdf(x);
        } else {
            double u = x - k.t_l;
            double c = norm_cdf(u);
            value = k.t_l * (1.0 - norm_cdf(k.t_l)) + u * c;
            deriv = c + u * norm_pdf(u);
        }
        return;
    }
    }
    throw std::logic_error("act_eval_deriv: bad tag");
}

} // namespace clipsgd
