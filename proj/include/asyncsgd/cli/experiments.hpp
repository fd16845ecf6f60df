#pragma once

// Experiment drivers shared by the command-line tool and the acceptance suite.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asyncsgd/cli/config.hpp"
#include "asyncsgd/engine.hpp"

namespace asyncsgd::cli {

// ---------------------------------------------------------------------------------------------
// Tuning

/// Grid-tunes the stepsize of `cfg` per `tune`. Under min_final_error a point's error is the
/// last-30 gradient-norm average, averaged over the config's replicas.
TuningReport tune_stepsize(const ExperimentConfig& cfg, const ObjectivePtr& obj, const TuneSpec& tune, int threads);

TuneCriterion parse_criterion(const std::string& name);

// ---------------------------------------------------------------------------------------------
// Scaling of T with the maximum delay

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t points = 0;
};

/// Ordinary least squares y = slope * x + intercept. Needs at least 3 points; the result
/// does not depend on the order of the points.
LinearFit fit_linear(std::vector<std::pair<double, double>> points);

struct ScalingPoint {
    double slow_factor = 1.0;
    Iteration tau_max = 0;
    double tuned_eta = 0.0;
    Iteration iterations = 0;
    double sim_time = 0.0;
    bool reached_eps = false;
    bool on_edge = false;
    /// The slow worker's first gradient was applied before the run stopped.
    bool straggler_applied = false;
    TuningReport tuning;
};

struct ScalingReport {
    std::string preset;
    double eps = 0.0;
    std::vector<ScalingPoint> points;  // ascending slow factor
    /// T against sqrt(tau_max) over all points.
    LinearFit fit;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

struct ScalingOptions {
    std::string preset = "quadratic";  // quadratic | logistic
    std::vector<double> slow_factors{1, 2, 4, 8, 16, 32, 64, 128, 256};
    std::uint64_t seed = 0;
    int threads = 1;
    int points_per_decade = 4;
    double eps = 1e-14;
    int window = 30;
    /// Per-run iteration cap; a point that never reaches eps is reported as not converged.
    Iteration max_iterations = 20000;
};

/// Two workers, the second `x` times slower; sigma = 0; the stepsize is tuned per point on
/// the log grid for the fewest iterations to eps.
ScalingReport scaling_experiment(const ScalingOptions& opts);

/// The preset objective (quadratic: d=10, eigenvalues in [1, 2]; logistic: m=100, d=20).
ExperimentConfig scaling_preset(const std::string& preset, std::uint64_t seed);

// ---------------------------------------------------------------------------------------------
// Policy comparison

struct PolicyResult {
    std::string policy;
    double eta = 0.0;
    Iteration iterations = 0;
    /// Gradient jobs started, applied or not.
    Iteration gradients = 0;
    double wall_time = 0.0;
    bool reached_eps = false;
    double final_error = 0.0;
    RunStatus status = RunStatus::kCompleted;
    RunTrace trace;
};

struct CompareReport {
    std::vector<PolicyResult> results;

    nlohmann::json to_json() const;
    /// policy,t,sim_time,grad_norm
    void write_curves_csv(std::ostream& os) const;
};

/// Runs async with a constant stepsize, async with the delay-adaptive rule and mini-batch
/// SGD on the config's objective and fleet. Each policy's stepsize is tuned when the config
/// has a tune request, otherwise all use the configured eta.
CompareReport compare_policies(const ExperimentConfig& cfg, int threads);

// ---------------------------------------------------------------------------------------------
// One extreme straggler

struct StragglerOptions {
    std::uint64_t seed = 0;
    Iteration horizon = 10000;
    int replicas = 20;
    double sigma = 1.0;
    double x0_scale = 10.0;
    int points_per_decade = 4;
    int threads = 1;
};

struct StragglerReport {
    double baseline_eta = 0.0;
    double baseline_error = 0.0;
    double drop_error = 0.0;
    double scale_error = 0.0;
    double constant_error = 0.0;
    bool constant_diverged = false;
    Iteration straggler_delay = 0;

    nlohmann::json to_json() const;
};

/// Fast worker with unit compute time plus one worker whose single gradient, computed at
/// x^(0), is applied at the last iteration T-1 with delay T-1. Errors are ||grad f(x^(T))||
/// averaged over replicas; the baseline is a straggler-free serial run with eta tuned for
/// that error, and every straggler run reuses the baseline eta.
StragglerReport straggler_experiment(const StragglerOptions& opts);

}  // namespace asyncsgd::cli
