#pragma once

// Discrete-event simulation of a parameter server and its workers.
//
// The iteration counter t advances once per applied gradient; the simulated wall clock is
// separate and only moves when a worker finishes. Server actions take zero simulated time.
// Events are ordered by (finish time, worker id, assignment order).

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <queue>
#include <variant>
#include <vector>

#include "asyncsgd/objectives.hpp"
#include "asyncsgd/rng.hpp"
#include "asyncsgd/stepsize.hpp"
#include "asyncsgd/trace.hpp"

namespace asyncsgd {

// ---------------------------------------------------------------------------------------------
// Worker compute-time models

struct ConstantTime {
    double delta = 1.0;
};

struct LogNormalTime {
    double mu = 0.0;
    double s = 0.5;
};

/// delta, multiplied by slow_factor with probability `probability` on each job.
struct StragglerTime {
    double delta = 1.0;
    double slow_factor = 10.0;
    double probability = 0.01;
};

using ComputeTime = std::variant<ConstantTime, LogNormalTime, StragglerTime>;

struct WorkerModel {
    WorkerId id = 0;
    ComputeTime compute = ConstantTime{};

    double sample_duration(Rng& stream) const;
};

/// Workers 0..n-1 with constant compute times `deltas[i]`.
std::vector<WorkerModel> constant_workers(const std::vector<double>& deltas);

// ---------------------------------------------------------------------------------------------
// Scheduling policies (the server's choice of A_t)

/// A_t = {j_t}. C_0 is `initial`, or every worker when empty.
struct MaxConcurrency {
    std::vector<WorkerId> initial;
};

/// Mini-batch SGD over all n workers: C_0 = [n]; A_t = [n] when (t + 1) mod n == 0, else empty.
struct MiniBatch {};

struct ScheduleContext {
    Iteration t;
    WorkerId finished;
    std::vector<WorkerId> idle;
    Iteration in_flight;
};

/// Arbitrary A_t. `select` must return a subset of `ctx.idle`.
struct CustomSchedule {
    std::vector<WorkerId> initial;
    std::function<std::vector<WorkerId>(const ScheduleContext&)> select;
};

/// Uniform client sampling with constant concurrency. C_0 is tau_C distinct clients (with
/// replacement when tau_C > n); each update samples one client uniformly from all n.
/// With `pile_up` a busy client queues the job (FIFO); without it every job runs on its
/// own execution slot immediately.
struct UniformClientSampling {
    Iteration concurrency = 1;
    bool pile_up = true;
};

/// Mini-batch whose batch members are drawn uniformly with replacement; each draw runs on
/// its own slot so a batch finishes at the max of its members' compute times.
struct SampledMiniBatch {
    Iteration batch = 1;
};

using SchedulerPolicy = std::variant<MaxConcurrency, MiniBatch, CustomSchedule, UniformClientSampling, SampledMiniBatch>;

/// A custom schedule driven by a table t -> A_t; iterations absent from the table assign nothing.
CustomSchedule table_schedule(std::vector<WorkerId> initial, std::vector<std::pair<Iteration, std::vector<WorkerId>>> table);

// ---------------------------------------------------------------------------------------------
// Stop rules

struct FixedIterations {
    Iteration iterations = 0;
};

struct GradNormBelow {
    double eps = 1e-10;
    Iteration max_iterations = 100000;
};

/// Mean of the last k values of ||grad f(x^(t))|| (including the current iterate) <= eps.
struct LastKAverageBelow {
    double eps = 1e-14;
    int k = 30;
    Iteration max_iterations = 1000000;
};

using StopRule = std::variant<FixedIterations, GradNormBelow, LastKAverageBelow>;

// ---------------------------------------------------------------------------------------------

/// Test hooks that deliberately break the simulator; used by the verification suite's
/// mutation checks.
struct FaultInjection {
    bool invert_tie_break = false;
    bool delay_off_by_one = false;
};

struct SimulationConfig {
    ObjectivePtr objective;
    NoiseModel noise;
    std::vector<WorkerModel> workers;
    SchedulerPolicy scheduler = MaxConcurrency{};
    StepsizePolicy stepsize = ConstantStepsize{0.1};
    Vector x0;
    StopRule stop = FixedIterations{100};
    std::uint64_t seed = 0;
    /// Keep per-iteration records. Tuning sweeps switch this off to save memory.
    bool keep_records = true;
    /// Declare divergence once ||grad f|| exceeds this.
    double divergence_threshold = 1e100;
    FaultInjection faults;
};

struct InFlightJob {
    WorkerId worker;
    ClientId client;
    Iteration start_iteration;
    std::shared_ptr<const Vector> assignment_point;
    std::uint64_t data_seed;
    double finish_time;
    std::uint64_t sequence;
};

class Simulator {
public:
    /// Validates the configuration and hands x^(0) to C_0. Throws InvalidConfigError.
    explicit Simulator(SimulationConfig config);

    /// Applies the earliest-finishing gradient and runs the scheduling step.
    /// Throws SimulationDeadlock when nothing is in flight.
    void advance();

    bool done() const { return done_; }
    Iteration iteration() const { return t_; }
    double now() const { return now_; }
    const Vector& point() const { return x_; }
    std::size_t event_queue_size() const { return events_.size(); }
    /// |C_t|: running plus queued jobs.
    Iteration in_flight() const { return in_flight_; }

    /// Runs to completion and returns the trace.
    RunTrace run();
    /// Snapshot of the trace at the current state.
    RunTrace trace() const;

private:
    struct EventOrder {
        bool inverted;
        bool operator()(const InFlightJob& a, const InFlightJob& b) const;
    };
    struct WorkerState {
        bool busy = false;
        std::deque<InFlightJob> queue;
        Rng noise;
        Rng timing;
    };

    void assign(WorkerId worker, ClientId client, Iteration start, const std::shared_ptr<const Vector>& point);
    void start_job(InFlightJob job);
    std::vector<WorkerId> select_assignments(const InFlightJob& finished);
    void evaluate_current();
    void check_stop();
    bool uses_slots() const;

    SimulationConfig cfg_;
    std::vector<WorkerState> workers_;
    std::priority_queue<InFlightJob, std::vector<InFlightJob>, EventOrder> events_;
    Rng sampling_;
    Vector x_;
    Iteration t_ = 0;
    double now_ = 0.0;
    Iteration in_flight_ = 0;
    std::uint64_t sequence_ = 0;
    bool done_ = false;
    RunStatus status_ = RunStatus::kCompleted;

    double current_grad_norm_ = 0.0;
    double current_value_ = 0.0;
    std::deque<double> recent_norms_;
    int tail_window_ = kTailWindow;

    std::vector<IterationRecord> records_;
    DelayLedger ledger_;
};

RunTrace simulate(SimulationConfig config);

/// Homogeneous run (every worker samples the full objective); rejects the client-sampling policies.
RunTrace run_homogeneous(SimulationConfig config);

/// Uniform client sampling over `family`'s clients with one worker model per client.
RunTrace run_heterogeneous(std::shared_ptr<const HeterogeneousFamily> family, const NoiseModel& noise,
                           std::vector<WorkerModel> workers, Iteration concurrency, const StepsizePolicy& stepsize,
                           const Vector& x0, const StopRule& stop, std::uint64_t seed, bool pile_up = true);

}  // namespace asyncsgd
