#include "asyncsgd/cli/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "asyncsgd/metrics.hpp"
#include "asyncsgd/trace_io.hpp"

namespace asyncsgd::cli {
namespace {

using nlohmann::json;

StopRule capped(StopRule stop, Iteration budget) {
    if (budget <= 0) return stop;
    std::visit(
        [budget](auto& rule) {
            using R = std::decay_t<decltype(rule)>;
            if constexpr (std::is_same_v<R, FixedIterations>) {
                rule.iterations = std::min(rule.iterations, budget);
            } else {
                rule.max_iterations = std::min(rule.max_iterations, budget);
            }
        },
        stop);
    return stop;
}

json nullable(double v) {
    return std::isfinite(v) ? json(v) : json(nullptr);
}

}  // namespace

TuneCriterion parse_criterion(const std::string& name) {
    if (name == "min_final_error") return TuneCriterion::kMinFinalError;
    if (name == "min_T_to_eps") return TuneCriterion::kMinIterationsToEps;
    throw InvalidConfigError("/stepsize/tune/criterion: unknown criterion '" + name + "'");
}

TuningReport tune_stepsize(const ExperimentConfig& cfg, const ObjectivePtr& obj, const TuneSpec& tune, int threads) {
    const auto grid = log_grid(tune.lo, tune.hi, tune.points_per_decade);
    const TuneRun run = [&](double eta, Iteration budget) {
        TuneOutcome out;
        out.reached_eps = true;
        double error_sum = 0.0;
        double time_sum = 0.0;
        for (int r = 0; r < cfg.replicas; ++r) {
            SimulationConfig sim = build_simulation(cfg, obj, r);
            sim.stepsize = build_stepsize(cfg, *obj, eta);
            sim.stop = capped(sim.stop, budget);
            sim.keep_records = false;
            const RunTrace trace = simulate(std::move(sim));
            if (trace.status == RunStatus::kDiverged) {
                out.diverged = true;
                out.final_error = std::numeric_limits<double>::infinity();
                out.iterations = trace.iterations();
                out.reached_eps = false;
                return out;
            }
            error_sum += error_estimate_last_k(trace, kTailWindow).value;
            time_sum += trace.wall_time;
            out.iterations = std::max(out.iterations, trace.iterations());
            out.reached_eps = out.reached_eps && trace.status == RunStatus::kConverged;
        }
        out.final_error = error_sum / cfg.replicas;
        out.wall_time = time_sum / cfg.replicas;
        return out;
    };
    return grid_tune(run, grid, parse_criterion(tune.criterion), threads);
}

// ---------------------------------------------------------------------------------------------

LinearFit fit_linear(std::vector<std::pair<double, double>> points) {
    if (points.size() < 3) throw InvalidConfigError("linear fit needs at least 3 points");
    std::sort(points.begin(), points.end());
    const auto n = static_cast<double>(points.size());
    double mx = 0.0;
    double my = 0.0;
    for (const auto& [x, y] : points) {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (const auto& [x, y] : points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    LinearFit fit;
    fit.points = points.size();
    if (sxx == 0.0) throw InvalidConfigError("linear fit needs at least two distinct x values");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (const auto& [x, y] : points) {
        const double e = y - (fit.slope * x + fit.intercept);
        ss_res += e * e;
    }
    fit.r_squared = syy == 0.0 ? (ss_res == 0.0 ? 1.0 : 0.0) : std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
    return fit;
}

ExperimentConfig scaling_preset(const std::string& preset, std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    if (preset == "quadratic") {
        cfg.objective.family = "quadratic";
        cfg.objective.dim = 10;
        cfg.objective.lambda_min = 1.0;
        cfg.objective.lambda_max = 2.0;
    } else if (preset == "logistic") {
        cfg.objective.family = "logistic";
        cfg.objective.dim = 20;
        cfg.objective.samples = 100;
    } else {
        throw InvalidConfigError("/preset: must be quadratic or logistic");
    }
    cfg.sigma = 0.0;
    cfg.workers = {WorkerSpec{}, WorkerSpec{}};
    cfg.scheduler.policy = "max_concurrency";
    cfg.stepsize.rule = "constant";
    cfg.stop.rule = "last_k";
    cfg.stop.eps = 1e-14;
    cfg.stop.k = 30;
    cfg.x0.kind = "zeros";
    return cfg;
}

json ScalingReport::to_json() const {
    json pts = json::array();
    for (const auto& p : points) {
        pts.push_back({{"slow_factor", p.slow_factor},
                       {"tau_max", p.tau_max},
                       {"sqrt_tau_max", std::sqrt(static_cast<double>(p.tau_max))},
                       {"tuned_eta", p.tuned_eta},
                       {"T", p.iterations},
                       {"sim_time", p.sim_time},
                       {"reached_eps", p.reached_eps},
                       {"eta_on_grid_edge", p.on_edge},
                       {"straggler_applied", p.straggler_applied},
                       {"tuning", p.tuning.to_json()}});
    }
    return {{"preset", preset},
            {"eps", eps},
            {"points", std::move(pts)},
            {"fit", {{"x", "sqrt_tau_max"}, {"y", "T"}, {"slope", fit.slope}, {"intercept", fit.intercept},
                     {"r_squared", fit.r_squared}, {"points", fit.points}}},
            {"warnings", warnings}};
}

ScalingReport scaling_experiment(const ScalingOptions& opts) {
    if (opts.slow_factors.size() < 2) throw InvalidConfigError("/slow_factors: need at least two values");
    ScalingReport report;
    report.preset = opts.preset;
    report.eps = opts.eps;

    ExperimentConfig cfg = scaling_preset(opts.preset, opts.seed);
    cfg.stop.eps = opts.eps;
    cfg.stop.k = opts.window;
    cfg.stop.max_iterations = opts.max_iterations;
    const ObjectivePtr obj = build_objective(cfg);
    const TuneSpec tune{opts.points_per_decade, 1e-5, 1e2, "min_T_to_eps"};

    auto factors = opts.slow_factors;
    std::sort(factors.begin(), factors.end());
    for (double x : factors) {
        if (!(x >= 1.0)) throw InvalidConfigError("/slow_factors: every slow factor must be >= 1");
        ExperimentConfig point_cfg = cfg;
        point_cfg.workers[1].delta = x;

        ScalingPoint p;
        p.slow_factor = x;
        p.tuning = tune_stepsize(point_cfg, obj, tune, opts.threads);
        p.tuned_eta = p.tuning.best_eta;
        p.on_edge = p.tuning.on_edge;

        SimulationConfig sim = build_simulation(point_cfg, obj);
        sim.stepsize = ConstantStepsize{p.tuned_eta};
        sim.keep_records = false;
        const RunTrace trace = simulate(std::move(sim));
        p.tau_max = tau_max(trace.ledger);
        p.iterations = trace.iterations();
        p.sim_time = trace.wall_time;
        p.reached_eps = trace.status == RunStatus::kConverged;
        p.straggler_applied = std::any_of(trace.ledger.applied.begin(), trace.ledger.applied.end(),
                                          [](const AppliedDelay& a) { return a.worker == 1; });

        const std::string tag = "slow factor " + format_double(x) + ": ";
        if (p.on_edge) report.warnings.push_back(tag + "tuned stepsize is on the edge of the grid");
        if (!p.reached_eps) report.warnings.push_back(tag + "eps not reached within the iteration cap");
        if (x > 1.0 && !p.straggler_applied) {
            report.warnings.push_back(tag + "converged before the slow worker reported; tau_max = " +
                                      std::to_string(p.tau_max) + " < x");
        }
        report.points.push_back(std::move(p));
    }

    std::vector<std::pair<double, double>> xy;
    for (const auto& p : report.points) {
        xy.emplace_back(std::sqrt(static_cast<double>(p.tau_max)), static_cast<double>(p.iterations));
    }
    report.fit = fit_linear(xy);
    return report;
}

// ---------------------------------------------------------------------------------------------

json CompareReport::to_json() const {
    json rows = json::array();
    for (const auto& r : results) {
        rows.push_back({{"policy", r.policy},
                        {"eta", r.eta},
                        {"iterations", r.iterations},
                        {"gradients", r.gradients},
                        {"sim_wall_time", r.wall_time},
                        {"reached_eps", r.reached_eps},
                        {"status", to_string(r.status)},
                        {"final_error", nullable(r.final_error)},
                        {"tau_avg", tau_avg(r.trace.ledger).value},
                        {"tau_max", tau_max(r.trace.ledger)}});
    }
    return {{"policies", std::move(rows)}};
}

void CompareReport::write_curves_csv(std::ostream& os) const {
    os << "policy,t,sim_time,grad_norm\n";
    for (const auto& r : results) {
        for (const auto& rec : r.trace.records) {
            os << r.policy << ',' << rec.t << ',' << format_double(rec.sim_time) << ','
               << format_double(rec.grad_norm) << '\n';
        }
        os << r.policy << ',' << r.iterations << ',' << format_double(r.wall_time) << ','
           << format_double(r.trace.final_grad_norm) << '\n';
    }
}

CompareReport compare_policies(const ExperimentConfig& cfg, int threads) {
    const ObjectivePtr obj = build_objective(cfg);
    const std::string adaptive_mode = cfg.stepsize.rule == "delay_adaptive" ? cfg.stepsize.mode : "scale";

    struct Variant {
        std::string name;
        std::string policy;
        std::string rule;
    };
    const std::vector<Variant> variants{{"async_constant", "max_concurrency", "constant"},
                                        {"async_delay_adaptive", "max_concurrency", "delay_adaptive"},
                                        {"minibatch", "minibatch", "constant"}};
    CompareReport report;
    for (const auto& v : variants) {
        ExperimentConfig pc = cfg;
        pc.scheduler = SchedulerSpec{};
        pc.scheduler.policy = v.policy;
        pc.stepsize.rule = v.rule;
        pc.stepsize.mode = adaptive_mode;
        if (v.rule == "constant") {
            pc.stepsize.smoothness.reset();
            pc.stepsize.tau_c.reset();
        }
        if (pc.stepsize.tune) pc.stepsize.eta = tune_stepsize(pc, obj, *pc.stepsize.tune, threads).best_eta;

        PolicyResult r;
        r.policy = v.name;
        r.eta = pc.stepsize.eta;
        SimulationConfig sim = build_simulation(pc, obj);
        r.trace = simulate(std::move(sim));
        r.iterations = r.trace.iterations();
        r.gradients = r.iterations + static_cast<Iteration>(r.trace.ledger.in_flight.size());
        r.wall_time = r.trace.wall_time;
        r.status = r.trace.status;
        r.reached_eps = r.status == RunStatus::kConverged;
        r.final_error = r.status == RunStatus::kDiverged ? std::numeric_limits<double>::infinity()
                                                         : error_estimate_last_k(r.trace, kTailWindow).value;
        report.results.push_back(std::move(r));
    }
    return report;
}

// ---------------------------------------------------------------------------------------------

json StragglerReport::to_json() const {
    return {{"baseline_eta", baseline_eta},
            {"baseline_error", baseline_error},
            {"drop_error", drop_error},
            {"scale_error", scale_error},
            {"constant_error", nullable(constant_error)},
            {"constant_diverged", constant_diverged},
            {"straggler_delay", straggler_delay}};
}

StragglerReport straggler_experiment(const StragglerOptions& opts) {
    if (opts.horizon < 2) throw InvalidConfigError("straggler experiment: horizon must be >= 2");
    if (opts.replicas < 1) throw InvalidConfigError("straggler experiment: replicas must be >= 1");
    const auto obj = make_quadratic(10, 1.0, 2.0, derive_seed(opts.seed, streams::kObjective));
    const Vector x0 = Vector::Constant(obj->dim(), opts.x0_scale);

    auto base_config = [&](std::vector<double> deltas, StepsizePolicy stepsize, int replica) {
        SimulationConfig sim;
        sim.objective = obj;
        sim.noise = NoiseModel{opts.sigma};
        sim.workers = constant_workers(deltas);
        sim.scheduler = MaxConcurrency{};
        sim.stepsize = std::move(stepsize);
        sim.x0 = x0;
        sim.stop = FixedIterations{opts.horizon};
        sim.seed = replica_seed(opts.seed, replica);
        sim.keep_records = false;
        return sim;
    };
    // Mean final error over replicas; +inf as soon as one replica diverges.
    auto mean_error = [&](const std::vector<double>& deltas, const StepsizePolicy& stepsize, Iteration* delay) {
        double sum = 0.0;
        for (int r = 0; r < opts.replicas; ++r) {
            const RunTrace trace = simulate(base_config(deltas, stepsize, r));
            if (trace.status == RunStatus::kDiverged) return std::numeric_limits<double>::infinity();
            if (delay) *delay = tau_max(trace.ledger);
            sum += trace.final_grad_norm;
        }
        return sum / opts.replicas;
    };

    StragglerReport report;
    const TuneRun run = [&](double eta, Iteration) {
        TuneOutcome out;
        out.final_error = mean_error({1.0}, ConstantStepsize{eta}, nullptr);
        out.diverged = !std::isfinite(out.final_error);
        out.iterations = opts.horizon;
        return out;
    };
    const auto tuning =
        grid_tune(run, default_log_grid(opts.points_per_decade), TuneCriterion::kMinFinalError, opts.threads);
    report.baseline_eta = tuning.best_eta;
    report.baseline_error = tuning.points[tuning.best_index].outcome.final_error;

    // The slow worker finishes between the fast worker's (T-1)-th and T-th gradients, so it
    // is applied at iteration T-1.
    const std::vector<double> fleet{1.0, static_cast<double>(opts.horizon) - 0.5};
    const double eta = report.baseline_eta;
    const double smoothness = obj->smoothness();
    report.drop_error =
        mean_error(fleet, DelayAdaptiveStepsize{eta, smoothness, 2, AdaptiveMode::kDrop}, &report.straggler_delay);
    report.scale_error = mean_error(fleet, DelayAdaptiveStepsize{eta, smoothness, 2, AdaptiveMode::kScale}, nullptr);
    report.constant_error = mean_error(fleet, ConstantStepsize{eta}, nullptr);
    report.constant_diverged = !std::isfinite(report.constant_error);
    return report;
}

}  // namespace asyncsgd::cli
