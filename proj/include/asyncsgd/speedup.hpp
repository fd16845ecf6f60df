#pragma once

// Expected wall time of asynchronous SGD vs. mini-batch SGD when each of n clients takes a
// constant time Delta_i per gradient and clients are drawn uniformly with replacement.
//
//   async:      Delta_bar   = (1/n) sum_i Delta_i              per tau_C gradients
//   mini-batch: Delta_tilde = sum_i alpha_i Delta_i           per batch of tau_C
//               alpha_i     = (i^C - (i-1)^C) / n^C            (Delta sorted ascending)
//
// alpha_i is P(max of C uniform draws has rank i).

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "asyncsgd/types.hpp"

namespace asyncsgd {

struct SpeedupInput {
    std::vector<double> deltas;  // sorted ascending, all > 0
    std::int64_t tau_c = 1;
};

/// Sorts `deltas` and validates them. Throws InvalidSpecError on empty, non-positive or
/// non-finite times, or tau_c < 1.
SpeedupInput make_speedup_input(std::vector<double> deltas, std::int64_t tau_c);

/// Parses "900x10,100x60" (count x value) or "1,3,5" into a list of times.
std::vector<double> parse_deltas(const std::string& text);

double async_time(const SpeedupInput& in);

/// alpha_1..alpha_n, evaluated in log space so n^C never overflows.
std::vector<double> minibatch_weights(std::size_t n, std::int64_t tau_c);

double minibatch_time(const SpeedupInput& in);

/// Delta_tilde / Delta_bar (>= 1).
double speedup_ratio(const SpeedupInput& in);

enum class OracleMethod { kExhaustive, kMonteCarlo };

struct OracleEstimate {
    double estimate;
    double stderr_;
    OracleMethod method;
    /// Exhaustive enumeration was requested but exceeded the budget.
    bool fell_back;
    std::int64_t samples;
};

inline constexpr std::int64_t kExhaustiveBudget = 1'000'000;

/// Exhaustive: averages max(Delta_{i_1..i_C}) over all n^C index tuples (budget 10^6).
/// Monte-Carlo: averages over `samples` i.i.d. tuples drawn from `seed`.
OracleEstimate minibatch_time_oracle(const SpeedupInput& in, OracleMethod method, std::int64_t samples = 100000,
                                     std::uint64_t seed = 0);

nlohmann::json speedup_report(const SpeedupInput& in, const OracleEstimate& oracle);

}  // namespace asyncsgd
