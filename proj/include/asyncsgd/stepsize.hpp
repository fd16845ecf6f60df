#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "asyncsgd/types.hpp"

namespace asyncsgd {

struct ConstantStepsize {
    double eta = 0.0;
};

enum class AdaptiveMode { kScale, kDrop };

/// Delay-adaptive rule: eta while the delay is at most the concurrency, and for staler
/// gradients either a value strictly below min(eta, 1/(4 L tau)) (scale) or zero (drop).
struct DelayAdaptiveStepsize {
    double eta = 0.0;
    double smoothness = 1.0;
    Iteration concurrency = 1;
    AdaptiveMode mode = AdaptiveMode::kScale;
};

/// Fixed stepsize from the constant-stepsize convergence proof, see theoretical_eta_thm1.
struct TheoreticalStepsize {
    double smoothness = 1.0;
    Iteration tau_max = 1;
    Iteration concurrency = 1;
    double sigma = 0.0;
    double r0 = 0.0;
    Iteration horizon = 0;
};

using StepsizePolicy = std::variant<ConstantStepsize, DelayAdaptiveStepsize, TheoreticalStepsize>;

/// Multiplier that turns the non-strict bound min(eta, 1/(4 L tau)) into a strict one.
inline constexpr double kStrictShave = 1.0 - 1e-9;

double stepsize_at(const StepsizePolicy& policy, Iteration t, Iteration tau);

/// min{ 1/(2L sqrt(tau_max tau_C)), sqrt(r0 / (2 L sigma^2 (T+1))) }; the second branch is
/// +inf when sigma == 0.
double theoretical_eta_thm1(double smoothness, Iteration tau_max, Iteration concurrency, double sigma, double r0,
                            Iteration horizon);

/// Two stepsize caps are in use for the delay-adaptive rule: eta <= 1/(4L) in the rate
/// statement and eta <= 1/(4 L tau_C) in the descent step behind it. Both are reported;
/// `tighter` is what theory-facing callers use.
struct AdaptiveEtaCap {
    double global_bound;
    double concurrency_bound;
    double tighter;
    bool discrepancy;
};
AdaptiveEtaCap delay_adaptive_eta_cap(double smoothness, Iteration concurrency);

nlohmann::json stepsize_to_json(const StepsizePolicy& policy);
StepsizePolicy stepsize_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------------------------
// Grid tuning

enum class TuneCriterion { kMinFinalError, kMinIterationsToEps };

/// What a single run at one grid point reports back to the tuner.
struct TuneOutcome {
    double final_error = 0.0;
    Iteration iterations = 0;
    bool reached_eps = false;
    bool diverged = false;
    double wall_time = 0.0;
};

struct TunePoint {
    double eta;
    TuneOutcome outcome;
    /// Run was cut off at the best iteration count found so far (min-iterations tuning only).
    bool pruned = false;
};

struct TuningReport {
    std::vector<TunePoint> points;
    TuneCriterion criterion = TuneCriterion::kMinFinalError;
    double best_eta = 0.0;
    std::size_t best_index = 0;
    bool on_edge = false;
    /// Set when min-iterations tuning found no point that reached eps and fell back to the
    /// smallest final error.
    bool fell_back = false;

    nlohmann::json to_json() const;
};

/// 10^{-5 + i/k} for i = 0 .. 7k.
std::vector<double> default_log_grid(int points_per_decade = 4);
std::vector<double> log_grid(double lo, double hi, int points_per_decade);

/// A run at stepsize `eta`. `budget` > 0 is an iteration cap the run may stop at: under
/// min-iterations tuning a run that needs more than the best count so far cannot win.
using TuneRun = std::function<TuneOutcome(double eta, Iteration budget)>;

/// Runs `run` at every grid point (up to `threads` at a time) and picks the best per
/// `criterion`. Ties go to the larger stepsize. Throws TuningFailed if every point diverged.
/// Under kMinIterationsToEps the grid is visited from the largest stepsize down and later
/// runs are capped at the best iteration count seen, so the choice is the same as an
/// uncapped sweep.
TuningReport grid_tune(const TuneRun& run, const std::vector<double>& grid, TuneCriterion criterion,
                       int threads = 1);

std::string to_string(TuneCriterion c);
std::string to_string(AdaptiveMode m);

}  // namespace asyncsgd
