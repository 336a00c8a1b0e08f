#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipsgd/dataset.hpp"
#include "clipsgd/logs.hpp"
#include "clipsgd/losses.hpp"
#include "clipsgd/optimizer.hpp"

namespace clipsgd {

struct TrainConfig {
    int epochs = 400;
    int batch_size = 256;
    int eval_every = 20;     // epochs between evaluations
    double train_fraction = 0.8;
    StepSchedule schedule;
    double lambda = 1.0;
    std::uint64_t seed = 0;
    std::uint64_t data_seed = 1; // fixes the dataset split across training seeds
    std::int64_t telemetry_stride = 1;

    void validate() const {
        if (epochs < 0 || batch_size <= 0 || eval_every <= 0)
            throw std::invalid_argument("train: epochs/batch/eval_every must be positive");
        if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
            throw std::invalid_argument("train: train_fraction must be in (0, 1)");
        if (!(lambda > 0.0)) throw std::invalid_argument("train: lambda must be positive");
    }
};

enum class Metric { Mse, Accuracy, Ce };

inline Metric parse_metric(const std::string& s) {
    if (s == "mse") return Metric::Mse;
    if (s == "accuracy") return Metric::Accuracy;
    if (s == "ce") return Metric::Ce;
    throw std::invalid_argument("unknown metric '" + s + "'");
}

/// Mean metric of the network over a dataset slice (indices into ds).
inline double evaluate(const Mlp& net, const Dataset& ds, std::span<const std::size_t> idx,
                       Metric metric) {
    if (idx.empty()) throw std::invalid_argument("evaluate: empty index set");
    double acc = 0.0;
    for (std::size_t i : idx) {
        switch (metric) {
        case Metric::Mse: {
            if (net.spec.head.tag != HeadKind::Tag::Scalar)
                throw std::invalid_argument("evaluate: mse needs a scalar head");
            HeadOutput out = forward(net, ds.inputs[i]);
            double d = out.values[0] - ds.targets[i];
            acc += d * d;
            break;
        }
        case Metric::Accuracy: {
            if (net.spec.head.tag != HeadKind::Tag::Softmax)
                throw std::invalid_argument("evaluate: accuracy needs a softmax head");
            HeadOutput out = forward(net, ds.inputs[i]);
            int best = 0;
            for (int c = 1; c < net.spec.head_dim(); ++c)
                if (out.values[c] > out.values[best]) best = c;
            acc += best == ds.label(i) ? 1.0 : 0.0;
            break;
        }
        case Metric::Ce: {
            if (net.spec.head.tag != HeadKind::Tag::Softmax)
                throw std::invalid_argument("evaluate: ce needs a softmax head");
            ForwardCache cache;
            HeadOutput out = forward(net, ds.inputs[i], &cache);
            acc += logsumexp(out.logits) - out.logits[ds.label(i)];
            break;
        }
        }
    }
    return acc / static_cast<double>(idx.size());
}

inline double evaluate(const Mlp& net, const Dataset& ds, Metric metric) {
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    return evaluate(net, ds, idx, metric);
}

struct SupervisedMetricsRow {
    int epoch = 0;
    double train_loss = 0.0;
    double test_metric = 0.0;
};

struct SupervisedRunResult {
    std::vector<SupervisedMetricsRow> metrics;
    std::vector<TelemetryRow> telemetry;
    double final_train_loss = 0.0;
    double final_test_metric = 0.0;
    double psi_vb_final = 0.0;
    double psi_wu_final = 0.0;
    double qv_final = 0.0;
    double sup_norm_vb = 0.0;
    double sup_norm_wu = 0.0;
    double lemma_K = 0.0;
    std::int64_t steps = 0;
    ParamSet final_params;
};

namespace detail {

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

inline Split split_dataset(std::size_t n, double train_fraction, std::uint64_t data_seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(data_seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    std::size_t n_train = std::max<std::size_t>(1, static_cast<std::size_t>(n * train_fraction));
    n_train = std::min(n_train, n - 1);
    Split sp;
    sp.train.assign(idx.begin(), idx.begin() + n_train);
    sp.test.assign(idx.begin() + n_train, idx.end());
    return sp;
}

inline void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(i)]);
}

} // namespace detail

/// Regression: epoch loop over shuffled mini-batches of the squared loss with
/// the two-track clipped update. Evaluates train/test MSE every eval_every
/// epochs and always on the last epoch.
inline SupervisedRunResult train_regression(const NetSpec& spec, const TrainConfig& cfg,
                                            const Dataset& ds) {
    cfg.validate();
    ds.check_bounds();
    if (spec.head.tag != HeadKind::Tag::Scalar)
        throw std::invalid_argument("train_regression: scalar head required");
    if (ds.classification)
        throw std::invalid_argument("train_regression: regression dataset required");
    if (spec.input_dim != ds.dim())
        throw std::invalid_argument("train_regression: input dim mismatch");

    Rng rng(cfg.seed);
    Mlp net{spec, init_params(spec, cfg.lambda, rng.derive(0x1217).next_u64())};
    OptimizerState opt(cfg.schedule, ClipConfig(cfg.lambda));
    double K = lemma_constant_K(spec, ds.x_max, ds.y_max);
    ParamNorms n0 = param_norm(net.params);
    TelemetryLog log(SubmartingaleTracker(n0.vb, n0.wu, K, cfg.lambda), cfg.telemetry_stride);

    auto sp = detail::split_dataset(ds.size(), cfg.train_fraction, cfg.data_seed);
    int batch = std::min<int>(cfg.batch_size, static_cast<int>(sp.train.size()));

    SupervisedRunResult out;
    out.lemma_K = K;
    std::vector<GradSplit> grads;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        detail::shuffle(sp.train, rng);
        double loss_acc = 0.0;
        std::size_t seen = 0;
        for (std::size_t ofs = 0; ofs < sp.train.size(); ofs += batch) {
            std::size_t hi = std::min(sp.train.size(), ofs + batch);
            grads.clear();
            double vb_before = param_norm(net.params).vb;
            double batch_loss = 0.0;
            for (std::size_t i = ofs; i < hi; ++i) {
                MseResult r = mse_loss_grad(net, ds.inputs[sp.train[i]], ds.targets[sp.train[i]]);
                batch_loss += r.loss;
                grads.push_back(std::move(r.grad));
            }
            StepInfo si = step_minibatch(net.params, grads, opt);
            ParamNorms nn = param_norm(net.params);
            log.record(si.a_n, si.vb_update_norm, si.wu_update_norm, vb_before, nn.vb, nn.wu,
                       batch_loss / static_cast<double>(hi - ofs));
            loss_acc += batch_loss;
            seen += hi - ofs;
        }
        out.final_train_loss = seen > 0 ? loss_acc / static_cast<double>(seen) : 0.0;
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            out.final_test_metric = evaluate(net, ds, sp.test, Metric::Mse);
            out.metrics.push_back({epoch, out.final_train_loss, out.final_test_metric});
        }
    }
    if (cfg.epochs == 0) out.final_test_metric = evaluate(net, ds, sp.test, Metric::Mse);

    out.telemetry = std::move(log.rows);
    out.psi_vb_final = log.tracker.psi_vb;
    out.psi_wu_final = log.tracker.psi_wu;
    out.qv_final = log.tracker.qv;
    out.sup_norm_vb = log.tracker.sup_norm_vb;
    out.sup_norm_wu = log.tracker.sup_norm_wu;
    out.steps = log.tracker.n;
    out.final_params = std::move(net.params);
    return out;
}

/// Classification: cross-entropy with plain SGD on every block. The gradient
/// entering the output layer is bounded for squashing activations, so the
/// clipping condition can never fire; that bound is asserted on every batch
/// and doubles as the run's Lemma check.
inline SupervisedRunResult train_classification(const NetSpec& spec, const TrainConfig& cfg,
                                                const Dataset& ds,
                                                GradMode mode = GradMode::Standard) {
    cfg.validate();
    ds.check_bounds();
    if (spec.head.tag != HeadKind::Tag::Softmax)
        throw std::invalid_argument("train_classification: softmax head required");
    if (!ds.classification)
        throw std::invalid_argument("train_classification: classification dataset required");
    if (spec.head_dim() != ds.num_classes)
        throw std::invalid_argument("train_classification: class count mismatch");
    if (spec.input_dim != ds.dim())
        throw std::invalid_argument("train_classification: input dim mismatch");

    Rng rng(cfg.seed);
    Mlp net{spec, init_params(spec, cfg.lambda, rng.derive(0x1217).next_u64())};
    // Plain SGD on both blocks is the clipped update with a threshold the
    // bounded CE gradient can never reach.
    bool squashing = true;
    for (const auto& l : spec.hidden) squashing = squashing && l.activation.squashing();
    double vb_bound = squashing ? ce_vb_grad_bound(spec) : 0.0;
    double lambda_eff = squashing ? vb_bound + 1.0 : 1e12;
    OptimizerState opt(cfg.schedule, ClipConfig(lambda_eff));

    double K = 0.0;
    std::unique_ptr<TelemetryLog> log;
    if (squashing) {
        K = lemma_constant_K(spec, ds.x_max, 1.0);
        ParamNorms n0 = param_norm(net.params);
        log = std::make_unique<TelemetryLog>(SubmartingaleTracker(n0.vb, n0.wu, K, lambda_eff),
                                             cfg.telemetry_stride);
    }

    auto sp = detail::split_dataset(ds.size(), cfg.train_fraction, cfg.data_seed);
    int batch = std::min<int>(cfg.batch_size, static_cast<int>(sp.train.size()));

    SupervisedRunResult out;
    out.lemma_K = K;
    std::vector<GradSplit> grads;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        detail::shuffle(sp.train, rng);
        double loss_acc = 0.0;
        std::size_t seen = 0;
        for (std::size_t ofs = 0; ofs < sp.train.size(); ofs += batch) {
            std::size_t hi = std::min(sp.train.size(), ofs + batch);
            grads.clear();
            double vb_before = param_norm(net.params).vb;
            double batch_loss = 0.0;
            for (std::size_t i = ofs; i < hi; ++i) {
                CeResult r = ce_loss_grad(net, ds.inputs[sp.train[i]], ds.label(sp.train[i]), mode);
                batch_loss += r.loss;
                if (squashing && norm2(r.grad.vb) > vb_bound * (1.0 + 1e-12))
                    throw invariant_breach("classification: output gradient norm exceeded the "
                                           "cross-entropy bound");
                grads.push_back(std::move(r.grad));
            }
            StepInfo si = step_minibatch(net.params, grads, opt);
            if (log) {
                ParamNorms nn = param_norm(net.params);
                log->record(si.a_n, si.vb_update_norm, si.wu_update_norm, vb_before, nn.vb, nn.wu,
                            batch_loss / static_cast<double>(hi - ofs));
            }
            loss_acc += batch_loss;
            seen += hi - ofs;
        }
        out.final_train_loss = seen > 0 ? loss_acc / static_cast<double>(seen) : 0.0;
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            out.final_test_metric = evaluate(net, ds, sp.test, Metric::Accuracy);
            out.metrics.push_back({epoch, out.final_train_loss, out.final_test_metric});
        }
    }
    if (cfg.epochs == 0) out.final_test_metric = evaluate(net, ds, sp.test, Metric::Accuracy);

    if (log) {
        out.telemetry = std::move(log->rows);
        out.psi_vb_final = log->tracker.psi_vb;
        out.psi_wu_final = log->tracker.psi_wu;
        out.qv_final = log->tracker.qv;
        out.sup_norm_vb = log->tracker.sup_norm_vb;
        out.sup_norm_wu = log->tracker.sup_norm_wu;
        out.steps = log->tracker.n;
    }
    out.final_params = std::move(net.params);
    return out;
}

} // namespace clipsgd
