#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "clipsgd/cartpole.hpp"
#include "clipsgd/logs.hpp"
#include "clipsgd/losses.hpp"
#include "clipsgd/optimizer.hpp"
#include "clipsgd/replay.hpp"
#include "clipsgd/telemetry.hpp"

namespace clipsgd {

/// Linear epsilon annealing: eps_start at step 0 falling to eps_end at
/// anneal_steps, constant afterwards.
struct EpsilonSchedule {
    double eps_start = 1.0;
    double eps_end = 0.1;
    std::int64_t anneal_steps = 100000;
};

inline double epsilon(const EpsilonSchedule& sch, std::int64_t n) {
    if (n < 0) throw std::invalid_argument("epsilon: n must be >= 0");
    double frac = static_cast<double>(std::min(n, sch.anneal_steps)) /
                  static_cast<double>(sch.anneal_steps);
    return sch.eps_start - (sch.eps_start - sch.eps_end) * frac;
}

/// Target-network policy: none (the framework's point), a periodically
/// synchronized hard copy, or a Polyak moving average.
struct TargetMode {
    enum class Tag { None, Periodic, Polyak };

    Tag tag = Tag::None;
    std::int64_t sync_every = 10000; // Periodic
    double rho = 0.995;              // Polyak

    static TargetMode none() { return {}; }
    static TargetMode periodic(std::int64_t every) {
        if (every <= 0) throw std::invalid_argument("target: sync interval must be positive");
        TargetMode t;
        t.tag = Tag::Periodic;
        t.sync_every = every;
        return t;
    }
    static TargetMode polyak(double rho) {
        if (!(rho > 0.0) || !(rho < 1.0))
            throw std::invalid_argument("target: polyak rho must be in (0, 1)");
        TargetMode t;
        t.tag = Tag::Polyak;
        t.rho = rho;
        return t;
    }
};

inline TargetMode parse_target(const std::string& tag) {
    if (tag == "none") return TargetMode::none();
    std::stringstream ss(tag);
    std::string name;
    std::getline(ss, name, ':');
    std::string arg;
    if (std::getline(ss, arg) && name == "periodic") return TargetMode::periodic(std::stoll(arg));
    if (!arg.empty() && name == "polyak") return TargetMode::polyak(std::stod(arg));
    throw std::invalid_argument("unknown target tag '" + tag + "'");
}

inline std::string format_target(const TargetMode& t) {
    std::ostringstream os;
    switch (t.tag) {
    case TargetMode::Tag::None: return "none";
    case TargetMode::Tag::Periodic: os << "periodic:" << t.sync_every; return os.str();
    case TargetMode::Tag::Polyak: os << "polyak:" << t.rho; return os.str();
    }
    return "none";
}

struct DqnConfig {
    double gamma = 0.99;
    int batch_size = 32;
    TargetMode target;
    std::int64_t eval_every = 5000;
    int eval_episodes = 5;
    std::int64_t max_episode_steps = 1000;
    std::int64_t total_steps = 0;
    std::size_t replay_capacity = 100000;
    EpsilonSchedule eps;
    double state_bound = 5.0; // compact-domain radius used for the Lemma constant
    bool fail_fast = false;

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0))
            throw std::invalid_argument("dqn: gamma must be in [0, 1]");
        if (batch_size <= 0) throw std::invalid_argument("dqn: batch_size must be positive");
        if (eval_every <= 0 || eval_episodes <= 0 || max_episode_steps <= 0)
            throw std::invalid_argument("dqn: evaluation settings must be positive");
        if (total_steps < 0) throw std::invalid_argument("dqn: total_steps must be >= 0");
    }
};

/// Epsilon-greedy action. Ties in the greedy branch go to the lowest index.
inline Action select_action(const Mlp& net, const CartPoleState& s, double eps, Rng& rng) {
    if (net.spec.head.tag != HeadKind::Tag::QValues || net.spec.head_dim() != kNumActions)
        throw std::invalid_argument("select_action: 3-action q-values head required");
    if (eps > 0.0 && rng.uniform01() < eps)
        return static_cast<Action>(rng.uniform_int(kNumActions));
    HeadOutput out = forward(net, s.as_vector());
    int best = 0;
    for (int i = 1; i < kNumActions; ++i)
        if (out.values[i] > out.values[best]) best = i;
    return static_cast<Action>(best);
}

/// Hard-copy or Polyak-average the main network into the target network.
inline void sync_target(const Mlp& net, ParamSet& target, const TargetMode& mode) {
    check_layout(net.spec, target);
    if (mode.tag == TargetMode::Tag::Polyak) {
        auto mix = [rho = mode.rho](double& t, double m) { t = rho * t + (1.0 - rho) * m; };
        for (std::size_t l = 0; l < target.inner.size(); ++l) {
            for (std::size_t i = 0; i < target.inner[l].W.a.size(); ++i)
                mix(target.inner[l].W.a[i], net.params.inner[l].W.a[i]);
            for (std::size_t i = 0; i < target.inner[l].u.size(); ++i)
                mix(target.inner[l].u[i], net.params.inner[l].u[i]);
        }
        for (std::size_t i = 0; i < target.V.a.size(); ++i) mix(target.V.a[i], net.params.V.a[i]);
        for (std::size_t i = 0; i < target.b.size(); ++i) mix(target.b[i], net.params.b[i]);
    } else {
        target = net.params;
    }
}

struct DqnUpdateResult {
    double mean_loss = 0.0;
    bool applied = false; // false when a non-finite loss/gradient skipped the step
    std::string error;    // what went non-finite, when !applied
};

/// One mini-batch update: per-sample Bellman gradients, vb clipped per sample
/// then averaged, wu averaged plain. A non-finite loss or gradient anywhere in
/// the batch skips the whole update and reports it, so parameters stay finite
/// and the caller can record the explosion.
inline DqnUpdateResult dqn_update(Mlp& net, const Mlp* target_net,
                                  std::span<const Transition> batch, OptimizerState& opt,
                                  const DqnConfig& cfg, StepInfo* info = nullptr,
                                  GradMode mode = GradMode::Standard) {
    if (batch.empty()) throw std::invalid_argument("dqn_update: empty batch");
    DqnUpdateResult res;
    std::vector<GradSplit> grads;
    grads.reserve(batch.size());
    double loss_acc = 0.0;
    try {
        for (const Transition& tr : batch) {
            const Mlp& tnet = target_net ? *target_net : net;
            double target = bellman_target(tnet, tr.s_next.as_vector(), tr.r, cfg.gamma, tr.done);
            if (!std::isfinite(target)) throw numeric_error("non-finite bellman target");
            BellmanResult br =
                bellman_loss_grad(net, tr.s.as_vector(), static_cast<int>(tr.a), target, mode);
            loss_acc += br.loss;
            if (!std::isfinite(br.loss) || !all_finite(br.grad.vb) || !all_finite(br.grad.wu))
                throw numeric_error("non-finite bellman loss or gradient");
            grads.push_back(std::move(br.grad));
        }
    } catch (const numeric_error& e) {
        res.mean_loss = loss_acc / static_cast<double>(batch.size());
        res.applied = false;
        res.error = e.what();
        return res;
    }
    StepInfo si = step_minibatch(net.params, grads, opt);
    if (info) *info = si;
    res.mean_loss = loss_acc / static_cast<double>(batch.size());
    res.applied = true;
    return res;
}

struct DqnMetricsRow {
    std::int64_t env_step = 0;
    double eval_mean_total_reward = 0.0;
    double eval_mean_discounted_reward = 0.0;
    double epsilon = 0.0;
    double bellman_loss_mean = 0.0;
};

struct DqnRunResult {
    std::vector<DqnMetricsRow> metrics;
    std::vector<ExplosionEvent> events;
    std::int64_t explosion_count = 0;
    std::vector<TelemetryRow> telemetry;
    double psi_vb_final = 0.0;
    double psi_wu_final = 0.0;
    double qv_final = 0.0;
    double sup_norm_vb = 0.0;
    double sup_norm_wu = 0.0;
    double final_eval_total_reward = 0.0;
    double final_eval_discounted_reward = 0.0;
    double lemma_K = 0.0;
    ParamSet final_params;
};

namespace detail {

/// Greedy rollouts for evaluation; returns (mean total, mean discounted).
inline std::pair<double, double> evaluate_policy(const Mlp& net, int episodes,
                                                 std::int64_t max_steps, double gamma, Rng& rng) {
    double total = 0.0, discounted = 0.0;
    for (int e = 0; e < episodes; ++e) {
        CartPoleState s = env_reset(rng);
        double ep_total = 0.0, ep_disc = 0.0, g = 1.0;
        for (std::int64_t t = 0; t < max_steps; ++t) {
            Action a;
            try {
                a = select_action(net, s, 0.0, rng);
            } catch (const numeric_error&) {
                a = static_cast<Action>(rng.uniform_int(kNumActions));
            }
            StepResult r = env_step(s, a);
            ep_total += r.reward;
            ep_disc += g * r.reward;
            g *= gamma;
            if (r.done) break;
            s = r.s_next;
        }
        total += ep_total;
        discounted += ep_disc;
    }
    double inv = 1.0 / episodes;
    return {total * inv, discounted * inv};
}

} // namespace detail

/// Full DQL training run: act with epsilon-greedy, store, sample a uniform
/// mini-batch, update with the two-track rule, evaluate greedily every
/// eval_every steps. Everything is a deterministic function of (spec, cfg,
/// opt settings, seed). Non-finite losses are recorded as explosion events
/// and skip the parameter update unless fail_fast is set.
inline DqnRunResult train_dqn(const NetSpec& spec, const DqnConfig& cfg,
                              const StepSchedule& schedule, double lambda, std::uint64_t seed,
                              std::int64_t telemetry_stride = 1,
                              GradMode mode = GradMode::Standard) {
    cfg.validate();
    if (spec.head.tag != HeadKind::Tag::QValues || spec.head_dim() != kNumActions)
        throw std::invalid_argument("train_dqn: 3-action q-values head required");

    Rng rng(seed);
    Rng eval_rng = rng.derive(0xE7A1);
    Mlp net{spec, init_params(spec, lambda, rng.derive(0x1217).next_u64())};
    std::optional<Mlp> target;
    if (cfg.target.tag != TargetMode::Tag::None) target = net;

    OptimizerState opt(schedule, ClipConfig(lambda));
    ReplayBuffer buffer(cfg.replay_capacity);

    // Bellman targets bounded by max |r| / (1 - gamma) on the compact state
    // box; that is the y_max role in the growth constant. The envelopes only
    // exist for squashing activations, so the GELU baseline runs untracked.
    bool squashing = true;
    for (const auto& l : spec.hidden) squashing = squashing && l.activation.squashing();
    std::unique_ptr<TelemetryLog> log;
    double K = 0.0;
    if (squashing) {
        double r_max = 1.0;
        double y_max = cfg.gamma < 1.0 ? r_max / (1.0 - cfg.gamma)
                                       : r_max * static_cast<double>(cfg.max_episode_steps);
        K = lemma_constant_K(spec, cfg.state_bound, y_max);
        ParamNorms n0 = param_norm(net.params);
        log = std::make_unique<TelemetryLog>(SubmartingaleTracker(n0.vb, n0.wu, K, lambda),
                                             telemetry_stride);
    }

    DqnRunResult out;
    out.lemma_K = K;
    constexpr std::int64_t kMaxRecordedEvents = 50;

    CartPoleState s = env_reset(rng);
    std::int64_t ep_len = 0;
    double recent_loss_acc = 0.0;
    std::int64_t recent_loss_count = 0;

    for (std::int64_t step_i = 0; step_i < cfg.total_steps; ++step_i) {
        double eps = epsilon(cfg.eps, step_i);
        Action a;
        try {
            a = select_action(net, s, eps, rng);
        } catch (const numeric_error& e) {
            if (cfg.fail_fast) throw;
            if (out.explosion_count < kMaxRecordedEvents)
                out.events.push_back({step_i, std::numeric_limits<double>::quiet_NaN(), e.what()});
            ++out.explosion_count;
            a = static_cast<Action>(rng.uniform_int(kNumActions));
        }
        StepResult sr = env_step(s, a);
        ++ep_len;
        bool timeout = ep_len >= cfg.max_episode_steps;
        bool done = sr.done || timeout;
        buffer.push({s, a, sr.reward, sr.s_next, done});
        if (done) {
            s = env_reset(rng);
            ep_len = 0;
        } else {
            s = sr.s_next;
        }

        if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<Transition> batch(cfg.batch_size);
            for (auto& b : batch) b = buffer.sample(rng);
            double vb_before = param_norm(net.params).vb;
            StepInfo si;
            DqnUpdateResult ur =
                dqn_update(net, target ? &*target : nullptr, batch, opt, cfg, &si, mode);
            if (ur.applied) {
                if (log) {
                    ParamNorms nn = param_norm(net.params);
                    log->record(si.a_n, si.vb_update_norm, si.wu_update_norm, vb_before, nn.vb,
                                nn.wu, ur.mean_loss);
                }
            } else {
                if (cfg.fail_fast) throw numeric_error("dqn explosion: " + ur.error);
                if (out.explosion_count < kMaxRecordedEvents)
                    out.events.push_back({step_i, ur.mean_loss, ur.error});
                ++out.explosion_count;
            }
            recent_loss_acc += ur.mean_loss;
            ++recent_loss_count;

            if (target) {
                if (cfg.target.tag == TargetMode::Tag::Periodic) {
                    if (opt.n % cfg.target.sync_every == 0)
                        sync_target(net, target->params, cfg.target);
                } else {
                    sync_target(net, target->params, cfg.target);
                }
            }
        }

        if ((step_i + 1) % cfg.eval_every == 0) {
            auto [tot, disc] = detail::evaluate_policy(net, cfg.eval_episodes,
                                                       cfg.max_episode_steps, cfg.gamma, eval_rng);
            double mean_loss =
                recent_loss_count > 0 ? recent_loss_acc / recent_loss_count : 0.0;
            out.metrics.push_back({step_i + 1, tot, disc, eps, mean_loss});
            out.final_eval_total_reward = tot;
            out.final_eval_discounted_reward = disc;
            recent_loss_acc = 0.0;
            recent_loss_count = 0;
        }
    }

    if (log) {
        out.telemetry = std::move(log->rows);
        out.psi_vb_final = log->tracker.psi_vb;
        out.psi_wu_final = log->tracker.psi_wu;
        out.qv_final = log->tracker.qv;
        out.sup_norm_vb = log->tracker.sup_norm_vb;
        out.sup_norm_wu = log->tracker.sup_norm_wu;
    } else {
        ParamNorms nf = param_norm(net.params);
        out.sup_norm_vb = nf.vb;
        out.sup_norm_wu = nf.wu;
    }
    out.final_params = std::move(net.params);
    return out;
}

} // namespace clipsgd
