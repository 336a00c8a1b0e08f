#pragma once

#include <cstdint>
#include <vector>

#include "clipsgd/telemetry.hpp"

namespace clipsgd {

/// One telemetry.csv row. Recorded every `stride` steps; the tracker itself
/// still checks its invariants on every step.
struct TelemetryRow {
    std::int64_t step = 0;
    double a_n = 0.0;
    double norm_vb = 0.0;
    double norm_wu = 0.0;
    double psi_vb = 0.0;
    double psi_wu = 0.0;
    double qv = 0.0;
    double grad_vb_norm_clipped = 0.0;
    double grad_wu_norm = 0.0;
    double loss = 0.0;
};

struct ExplosionEvent {
    std::int64_t step = 0;
    double loss = 0.0; // may be inf or nan
    std::string what;
};

/// Per-step telemetry recording shared by all tracks.
struct TelemetryLog {
    SubmartingaleTracker tracker;
    std::vector<TelemetryRow> rows;
    std::int64_t stride = 1;

    TelemetryLog(SubmartingaleTracker t, std::int64_t stride_)
        : tracker(std::move(t)), stride(stride_) {}

    /// Record one optimizer step. vb_before is the output-block norm the
    /// gradient was computed at; the other norms are post-step observations.
    void record(double a_n, double grad_vb_norm_clipped, double grad_wu_norm, double vb_before,
                double vb_after, double wu_after, double loss) {
        update_psi_vb(tracker, a_n, grad_vb_norm_clipped, vb_after);
        update_psi_wu(tracker, a_n, vb_before, wu_after);
        if (stride <= 1 || tracker.n % stride == 1 || tracker.n == 1) {
            rows.push_back({tracker.n, a_n, vb_after, wu_after, tracker.psi_vb, tracker.psi_wu,
                            tracker.qv, grad_vb_norm_clipped, grad_wu_norm, loss});
        }
    }
};

} // namespace clipsgd
