#pragma once

// Self-check suite behind the `verify` subcommand.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asyncsgd/engine.hpp"

namespace asyncsgd::cli {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct VerifyReport {
    std::vector<CheckResult> checks;

    bool all_pass() const;
    nlohmann::json to_json() const;
    void print(std::ostream& os) const;
};

struct VerifyOptions {
    std::uint64_t seed = 0;
    int fuzz_configs = 200;
    Iteration fuzz_max_iterations = 2000;
    FaultInjection faults;
};

/// A random small simulation: 1-16 workers, any scheduling policy, any compute-time model,
/// up to `max_iterations` iterations of a 2-d quadratic.
SimulationConfig random_fuzz_config(Rng& rng, Iteration max_iterations);

/// Integer schedule fingerprint: FNV-1a over (j_t, tau_t) for every applied gradient.
std::uint64_t schedule_hash(const RunTrace& trace);

/// Four equal-speed workers, 64 iterations; every tie is broken by worker id.
SimulationConfig determinism_config(const FaultInjection& faults = {});
inline constexpr std::uint64_t kDeterminismGolden = 0x6619199e72632562ULL;

CheckResult check_concurrency_identity(const VerifyOptions& opts);
CheckResult check_speedup_oracle(const VerifyOptions& opts, int monte_carlo_inputs = 20);
CheckResult check_minibatch_oracle(const VerifyOptions& opts, int objectives = 5);
CheckResult check_finite_differences(const VerifyOptions& opts);
CheckResult check_noise_calibration(const VerifyOptions& opts);
CheckResult check_determinism(const VerifyOptions& opts);

/// Iterates of plain mini-batch SGD with batch n: every worker computes a gradient at the
/// same point and the gradients are applied one at a time in finish order.
std::vector<Vector> direct_minibatch_iterates(const SimulationConfig& cfg, Iteration iterations);

VerifyReport run_verify(const VerifyOptions& opts);

}  // namespace asyncsgd::cli
