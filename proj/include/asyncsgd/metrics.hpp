#pragma once

// Delay and concurrency statistics over a DelayLedger / RunTrace.
//
// Two in-flight conventions are in use:
//  * main text: the in-flight delay of a job assigned at iteration s is T - s, and the job
//    that would be applied next (j_T) is excluded; the average divides by T + |C_T| - 1.
//  * conservation identity: every delay is counted inclusively (a job assigned at s and
//    applied at a contributes a - s + 1; a job still in flight contributes T - s + 1), so
//    that initial jobs carry delay 1 at t = 0. Under this counting
//        sum(applied) + sum(active at T) == sum_{t=0}^{T} |C_t|
//    holds as an exact integer identity.

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "asyncsgd/trace.hpp"

namespace asyncsgd {

enum class InFlightConvention {
    kExcludeNextToFinish,  // denominator T + |C_T| - 1
    kIncludeAll,           // denominator T + |C_T|
};

std::string to_string(InFlightConvention c);

struct DelayAverage {
    double value;
    std::int64_t numerator;
    std::int64_t denominator;
    InFlightConvention convention;
};

/// Uses kExcludeNextToFinish whenever C_T is non-empty, otherwise kIncludeAll.
DelayAverage tau_avg(const DelayLedger& ledger);
DelayAverage tau_avg(const DelayLedger& ledger, InFlightConvention convention);

Iteration tau_max(const DelayLedger& ledger);

struct Remark5Result {
    std::int64_t lhs;
    std::int64_t rhs;
    bool pass;

    /// Throws IdentityViolation when the two sides differ.
    void require() const;
};

Remark5Result remark5_check(const DelayLedger& ledger);

/// Average delay under the inclusive counting: lhs / (T + |C_T| - 1), kept as an exact
/// fraction. Equals (T + 1) / (T + |C_T| - 1) * mean concurrency whenever the identity holds.
struct Fraction {
    std::int64_t numerator;
    std::int64_t denominator;
};
Fraction tau_avg_inclusive(const DelayLedger& ledger);

/// Mean of |C_t| for t = 0..T, as an exact fraction and as a double.
Fraction concurrency_sum(const DelayLedger& ledger);
double average_concurrency(const DelayLedger& ledger);
Iteration max_concurrency(const DelayLedger& ledger);

/// Per-client average delay including that client's unapplied jobs. nullopt when the
/// client was never sampled.
std::optional<double> tau_avg_per_client(const DelayLedger& ledger, ClientId client);

struct ErrorEstimate {
    double value;
    int window;
    /// The trace had fewer than k gradient norms; the whole trace was averaged.
    bool truncated;
};

/// Mean of the last k values of ||grad f(x^(t))||, t = 0..T (un-squared).
ErrorEstimate error_estimate_last_k(const RunTrace& trace, int k = 30);
ErrorEstimate error_estimate_last_k(const std::vector<double>& grad_norms, int k = 30);

enum class GradWeights { kUniform, kAssigned, kStepsize };

/// Weighted mean of ||grad f(x^(t))||^2 over the recorded iterations. nullopt when every
/// weight is zero.
std::optional<double> weighted_grad_average(const RunTrace& trace, GradWeights weights);

/// {tau_avg, tau_max, tau_avg_per_client[], avg_concurrency, remark5{lhs,rhs,pass},
///  error_last30, ...}
nlohmann::json metrics_summary(const RunTrace& trace);

}  // namespace asyncsgd
