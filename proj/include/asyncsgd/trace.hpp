#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asyncsgd/types.hpp"

namespace asyncsgd {

/// One applied gradient. The iteration at which it was applied is its index in
/// DelayLedger::applied.
struct AppliedDelay {
    Iteration start;
    Iteration delay;
    WorkerId worker;
    ClientId client;
};

/// A job still assigned (running or queued) when the run stopped.
struct PendingJob {
    Iteration start;
    WorkerId worker;
    ClientId client;
    /// The job the event queue would have applied next (j_T). At most one per ledger.
    bool next_to_finish;
};

/// Raw delay bookkeeping of one run. Stores start iterations rather than finished
/// statistics so that every delay convention can be derived exactly.
struct DelayLedger {
    /// T, the number of applied gradients.
    Iteration iterations = 0;
    std::vector<AppliedDelay> applied;
    /// The active multiset C_T at termination.
    std::vector<PendingJob> in_flight;
    /// |C_t| for t = 0 .. T (size T + 1).
    std::vector<Iteration> concurrency_log;
    /// Number of times each client (worker, in homogeneous runs) was handed a job, T_i.
    std::vector<Iteration> samples_per_client;

    Iteration pending_delay(const PendingJob& job) const { return iterations - job.start; }
    int num_clients() const { return static_cast<int>(samples_per_client.size()); }
};

struct IterationRecord {
    Iteration t;
    WorkerId worker;
    ClientId client;
    Iteration delay;
    double eta;
    /// ||grad f(x^(t))|| and f(x^(t)) at the iterate before update t.
    double grad_norm;
    double value;
    /// Simulated wall clock at which the gradient arrived.
    double sim_time;
    /// |A_t|, jobs assigned after update t.
    Iteration assigned;
    /// |C_t|, jobs in flight before update t.
    Iteration active;
};

enum class RunStatus {
    kCompleted,     // fixed iteration budget exhausted
    kConverged,     // accuracy target met
    kNotConverged,  // iteration cap reached before the accuracy target
    kDiverged,      // iterate or gradient became non-finite / exceeded the divergence bound
};

std::string to_string(RunStatus status);

/// Minimum number of trailing gradient norms every trace keeps.
inline constexpr int kTailWindow = 30;

struct RunTrace {
    std::vector<IterationRecord> records;
    Vector final_point;
    double final_grad_norm = 0.0;
    double final_value = 0.0;
    DelayLedger ledger;
    double wall_time = 0.0;
    RunStatus status = RunStatus::kCompleted;
    /// The last few ||grad f(x^(t))|| ending with the final iterate; kept even without records.
    std::vector<double> tail_grad_norms;

    Iteration iterations() const { return ledger.iterations; }

    /// ||grad f(x^(t))|| for t = 0 .. T. Requires records to have been kept.
    std::vector<double> grad_norm_series() const;
};

}  // namespace asyncsgd
