#pragma once

// Experiment configuration: a JSON document that, together with its master seed, fully
// determines a run. See README.md for the schema.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asyncsgd/engine.hpp"

namespace asyncsgd::cli {

struct ObjectiveSpec {
    std::string family = "quadratic";  // quadratic | logistic | heterogeneous | file
    std::int64_t dim = 10;
    double lambda_min = 1.0;
    double lambda_max = 2.0;
    std::int64_t samples = 100;  // logistic m
    int clients = 1;             // heterogeneous n
    double zeta = 0.0;           // heterogeneous rms shift norm
    std::string path;            // file

    bool operator==(const ObjectiveSpec&) const = default;
};

struct WorkerSpec {
    std::string compute = "constant";  // constant | lognormal | straggler
    double delta = 1.0;
    double mu = 0.0;
    double s = 0.5;
    double slow_factor = 10.0;
    double probability = 0.01;

    bool operator==(const WorkerSpec&) const = default;
};

struct ScheduleEntry {
    Iteration t = 0;
    std::vector<WorkerId> assign;

    bool operator==(const ScheduleEntry&) const = default;
};

struct SchedulerSpec {
    std::string policy = "max_concurrency";  // max_concurrency | minibatch | custom | uniform_client_sampling | sampled_minibatch
    std::vector<WorkerId> initial;
    std::vector<ScheduleEntry> table;
    Iteration tau_c = 1;
    bool pile_up = true;
    Iteration batch = 1;

    bool operator==(const SchedulerSpec&) const = default;
};

struct TuneSpec {
    int points_per_decade = 4;
    double lo = 1e-5;
    double hi = 1e2;
    std::string criterion = "min_final_error";  // min_final_error | min_T_to_eps

    bool operator==(const TuneSpec&) const = default;
};

struct StepsizeSpec {
    std::string rule = "constant";  // constant | delay_adaptive | theoretical
    double eta = 0.1;
    std::string mode = "scale";
    /// Defaults: the objective's certified L, and the largest initial concurrency.
    std::optional<double> smoothness;
    std::optional<Iteration> tau_c;
    Iteration tau_max = 1;
    double r0 = 0.0;
    Iteration horizon = 0;
    std::optional<TuneSpec> tune;

    bool operator==(const StepsizeSpec&) const = default;
};

struct StopSpec {
    std::string rule = "fixed";  // fixed | grad_norm | last_k
    Iteration iterations = 1000;
    double eps = 1e-10;
    int k = 30;
    Iteration max_iterations = 100000;

    bool operator==(const StopSpec&) const = default;
};

struct InitialPointSpec {
    std::string kind = "zeros";  // zeros | gaussian | explicit
    double scale = 1.0;
    std::vector<double> values;

    bool operator==(const InitialPointSpec&) const = default;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    ObjectiveSpec objective;
    double sigma = 0.0;
    std::vector<WorkerSpec> workers{WorkerSpec{}};
    SchedulerSpec scheduler;
    StepsizeSpec stepsize;
    StopSpec stop;
    InitialPointSpec x0;
    int replicas = 1;
    std::vector<double> slow_factors;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Throws InvalidConfigError naming the offending field path (e.g. "/stepsize/eta").
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

ObjectivePtr build_objective(const ExperimentConfig& cfg);
std::vector<WorkerModel> build_workers(const ExperimentConfig& cfg);
SchedulerPolicy build_scheduler(const ExperimentConfig& cfg);
StopRule build_stop(const ExperimentConfig& cfg);
Vector build_initial_point(const ExperimentConfig& cfg, const Objective& obj);
/// The stepsize rule with `eta` replaced by `eta_override` when given.
StepsizePolicy build_stepsize(const ExperimentConfig& cfg, const Objective& obj,
                              std::optional<double> eta_override = std::nullopt);

/// Everything but the stepsize rule, for replica `replica` of the experiment.
SimulationConfig build_simulation(const ExperimentConfig& cfg, ObjectivePtr obj, int replica = 0);

std::uint64_t replica_seed(std::uint64_t master, int replica);

}  // namespace asyncsgd::cli
