#include "asyncsgd/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "asyncsgd/cli/config.hpp"
#include "asyncsgd/cli/experiments.hpp"
#include "asyncsgd/cli/svg.hpp"
#include "asyncsgd/cli/verify.hpp"
#include "asyncsgd/metrics.hpp"
#include "asyncsgd/speedup.hpp"
#include "asyncsgd/trace_io.hpp"

namespace asyncsgd::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--seed", flags.seed, "Master seed (overrides the config file)");
    cmd->add_option("--out", flags.out, "Output directory")->capture_default_str();
    cmd->add_option("--threads", flags.threads, "Parallel simulations during tuning")
        ->check(CLI::Range(1, 256))
        ->capture_default_str();
}

fs::path prepare_out(const CommonFlags& flags) {
    const fs::path dir(flags.out);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    os << text;
}

ExperimentConfig load_with_seed(const std::string& path, const CommonFlags& flags) {
    ExperimentConfig cfg = load_config(path);
    if (flags.seed) cfg.seed = *flags.seed;
    return cfg;
}

bool converged_or_fixed(RunStatus s) {
    return s == RunStatus::kConverged || s == RunStatus::kCompleted;
}

// ---------------------------------------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const CommonFlags& flags, std::ostream& out) {
    ExperimentConfig cfg = load_with_seed(config_path, flags);
    const ObjectivePtr obj = build_objective(cfg);
    const fs::path dir = prepare_out(flags);
    write_json_file(dir / "objective.json", obj->to_json());

    if (cfg.stepsize.tune) {
        const auto report = tune_stepsize(cfg, obj, *cfg.stepsize.tune, flags.threads);
        write_json_file(dir / "tuning.json", report.to_json());
        cfg.stepsize.eta = report.best_eta;
        cfg.stepsize.tune.reset();
    }
    write_json_file(dir / "config.json", config_to_json(cfg));

    json metrics;
    json replicas = json::array();
    bool all_converged = true;
    for (int r = 0; r < cfg.replicas; ++r) {
        const RunTrace trace = simulate(build_simulation(cfg, obj, r));
        all_converged = all_converged && converged_or_fixed(trace.status);
        const std::string suffix = r == 0 ? "" : "_" + std::to_string(r);
        {
            std::ofstream csv(dir / ("trace" + suffix + ".csv"), std::ios::binary);
            write_trace_csv(csv, trace);
        }
        json summary = metrics_summary(trace);
        summary["seed"] = replica_seed(cfg.seed, r);
        if (r == 0) {
            metrics = summary;
            Series s{"||grad f||", {}, false};
            const auto series = trace.grad_norm_series();
            for (std::size_t t = 0; t < series.size(); ++t) s.points.emplace_back(static_cast<double>(t), series[t]);
            write_text(dir / "trace.svg",
                       line_chart_svg({s}, ChartOptions{"gradient norm", "iteration t", "||grad f(x_t)||", true}));
        }
        replicas.push_back(std::move(summary));
    }
    if (cfg.replicas > 1) metrics["replicas"] = std::move(replicas);
    write_json_file(dir / "metrics.json", metrics);

    out << "status " << metrics["status"].get<std::string>() << ", T = " << metrics["iterations"]
        << ", tau_avg = " << metrics["tau_avg"] << ", tau_max = " << metrics["tau_max"] << '\n';
    return all_converged ? kExitOk : kExitNotConverged;
}

int cmd_tune(const std::string& config_path, const CommonFlags& flags, std::ostream& out) {
    ExperimentConfig cfg = load_with_seed(config_path, flags);
    const ObjectivePtr obj = build_objective(cfg);
    const TuneSpec spec = cfg.stepsize.tune.value_or(TuneSpec{});
    const auto report = tune_stepsize(cfg, obj, spec, flags.threads);
    const fs::path dir = prepare_out(flags);
    write_json_file(dir / "tuning.json", report.to_json());
    out << "chosen eta " << format_double(report.best_eta) << (report.on_edge ? " (on the grid edge)" : "")
        << (report.fell_back ? " (no point reached eps; smallest final error)" : "") << '\n';
    return kExitOk;
}

int cmd_scaling(const ScalingOptions& opts, const CommonFlags& flags, std::ostream& out) {
    const ScalingReport report = scaling_experiment(opts);
    const fs::path dir = prepare_out(flags);
    write_json_file(dir / "scaling.json", report.to_json());

    std::ofstream csv(dir / "scaling.csv", std::ios::binary);
    csv << "slow_factor,tau_max,sqrt_tau_max,tuned_eta,T,sim_time,reached_eps,straggler_applied\n";
    Series measured{"T", {}, true};
    Series fitted{"fit", {}, false};
    for (const auto& p : report.points) {
        const double sx = std::sqrt(static_cast<double>(p.tau_max));
        csv << format_double(p.slow_factor) << ',' << p.tau_max << ',' << format_double(sx) << ','
            << format_double(p.tuned_eta) << ',' << p.iterations << ',' << format_double(p.sim_time) << ','
            << p.reached_eps << ',' << p.straggler_applied << '\n';
        measured.points.emplace_back(sx, static_cast<double>(p.iterations));
    }
    const auto [lo, hi] = std::minmax_element(measured.points.begin(), measured.points.end());
    for (double x : {lo->first, hi->first}) fitted.points.emplace_back(x, report.fit.slope * x + report.fit.intercept);
    write_text(dir / "scaling.svg", line_chart_svg({measured, fitted}, ChartOptions{report.preset + " preset",
                                                                                      "sqrt(tau_max)", "T to eps"}));

    for (const auto& w : report.warnings) out << "warning: " << w << '\n';
    out << "fit T = " << format_double(report.fit.slope) << " * sqrt(tau_max) + " << format_double(report.fit.intercept)
        << ", R^2 = " << format_double(report.fit.r_squared) << '\n';
    const bool all_reached =
        std::all_of(report.points.begin(), report.points.end(), [](const ScalingPoint& p) { return p.reached_eps; });
    return all_reached ? kExitOk : kExitNotConverged;
}

int cmd_compare(const std::string& config_path, bool straggler, const CommonFlags& flags, std::ostream& out) {
    const fs::path dir = prepare_out(flags);
    if (straggler) {
        StragglerOptions opts;
        if (flags.seed) opts.seed = *flags.seed;
        opts.threads = flags.threads;
        const auto report = straggler_experiment(opts);
        write_json_file(dir / "straggler.json", report.to_json());
        out << "baseline " << format_double(report.baseline_error) << ", drop " << format_double(report.drop_error)
            << ", scale " << format_double(report.scale_error) << ", constant "
            << format_double(report.constant_error) << '\n';
        return kExitOk;
    }
    if (config_path.empty()) throw InvalidConfigError("compare: --config is required unless --straggler is given");
    const ExperimentConfig cfg = load_with_seed(config_path, flags);
    const CompareReport report = compare_policies(cfg, flags.threads);
    write_json_file(dir / "compare.json", report.to_json());
    {
        std::ofstream csv(dir / "curves.csv", std::ios::binary);
        report.write_curves_csv(csv);
    }
    std::vector<Series> by_time;
    std::vector<Series> by_iter;
    for (const auto& r : report.results) {
        Series st{r.policy, {}, false};
        Series si{r.policy, {}, false};
        for (const auto& rec : r.trace.records) {
            st.points.emplace_back(rec.sim_time, rec.grad_norm);
            si.points.emplace_back(static_cast<double>(rec.t), rec.grad_norm);
        }
        by_time.push_back(std::move(st));
        by_iter.push_back(std::move(si));
    }
    write_text(dir / "compare_time.svg",
               line_chart_svg(by_time, ChartOptions{"error vs simulated time", "simulated time", "||grad f||", true}));
    write_text(dir / "compare_iterations.svg",
               line_chart_svg(by_iter, ChartOptions{"error vs iterations", "iteration t", "||grad f||", true}));

    bool all_converged = true;
    for (const auto& r : report.results) {
        out << r.policy << ": eta " << format_double(r.eta) << ", T " << r.iterations << ", wall "
            << format_double(r.wall_time) << ", " << to_string(r.status) << '\n';
        all_converged = all_converged && converged_or_fixed(r.status);
    }
    return all_converged ? kExitOk : kExitNotConverged;
}

int cmd_speedup(const std::string& deltas, std::int64_t tau_c, const std::string& method, std::int64_t samples,
                const CommonFlags& flags, std::ostream& out) {
    const auto in = make_speedup_input(parse_deltas(deltas), tau_c);
    const OracleMethod m = method == "exhaustive" ? OracleMethod::kExhaustive : OracleMethod::kMonteCarlo;
    const auto oracle = minibatch_time_oracle(in, m, samples, flags.seed.value_or(0));
    const json report = speedup_report(in, oracle);
    const fs::path dir = prepare_out(flags);
    write_json_file(dir / "speedup.json", report);

    std::ofstream csv(dir / "alphas.csv", std::ios::binary);
    csv << "i,delta,alpha\n";
    const auto alphas = minibatch_weights(in.deltas.size(), in.tau_c);
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        csv << i + 1 << ',' << format_double(in.deltas[i]) << ',' << format_double(alphas[i]) << '\n';
    }
    out << report.dump(2) << '\n';
    return kExitOk;
}

int cmd_verify(const VerifyOptions& opts, const CommonFlags& flags, std::ostream& out) {
    const VerifyReport report = run_verify(opts);
    const fs::path dir = prepare_out(flags);
    write_json_file(dir / "verify.json", report.to_json());
    report.print(out);
    return report.all_pass() ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Asynchronous SGD simulator"};
    app.name("asyncsgd");
    app.require_subcommand(1);

    CommonFlags flags;
    std::string config_path;

    auto* simulate_cmd = app.add_subcommand("simulate", "Run one configured simulation");
    simulate_cmd->add_option("config", config_path, "Experiment config (JSON)")->required();
    add_common(simulate_cmd, flags);

    auto* tune_cmd = app.add_subcommand("tune", "Grid-tune the stepsize of a config");
    tune_cmd->add_option("config", config_path, "Experiment config (JSON)")->required();
    add_common(tune_cmd, flags);

    ScalingOptions scaling;
    auto* scaling_cmd = app.add_subcommand("scaling", "Iterations to eps against the maximum delay");
    scaling_cmd->add_option("--preset", scaling.preset, "quadratic or logistic")
        ->check(CLI::IsMember({"quadratic", "logistic"}))
        ->capture_default_str();
    scaling_cmd->add_option("--slow-factors", scaling.slow_factors, "Slowdowns of the second worker")->delimiter(',');
    scaling_cmd->add_option("--points-per-decade", scaling.points_per_decade, "Stepsize grid density")
        ->check(CLI::Range(1, 100))
        ->capture_default_str();
    scaling_cmd->add_option("--max-iterations", scaling.max_iterations, "Iteration cap per run")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    add_common(scaling_cmd, flags);

    bool straggler = false;
    auto* compare_cmd = app.add_subcommand("compare", "Async (constant, delay-adaptive) against mini-batch");
    compare_cmd->add_option("config", config_path, "Experiment config (JSON)");
    compare_cmd->add_flag("--straggler", straggler, "Run the single extreme straggler construction instead");
    add_common(compare_cmd, flags);

    std::string deltas;
    std::int64_t tau_c = 1;
    std::string method = "exhaustive";
    std::int64_t samples = 100000;
    auto* speedup_cmd = app.add_subcommand("speedup", "Expected async vs mini-batch time per batch");
    speedup_cmd->add_option("--deltas", deltas, "Compute times, e.g. 900x10,100x60")->required();
    speedup_cmd->add_option("--tau-c", tau_c, "Concurrency / batch size")->required()->check(CLI::PositiveNumber);
    speedup_cmd->add_option("--method", method, "Oracle: exhaustive (falls back above 1e6 tuples) or montecarlo")
        ->check(CLI::IsMember({"exhaustive", "montecarlo"}))
        ->capture_default_str();
    speedup_cmd->add_option("--samples", samples, "Monte-Carlo samples")->check(CLI::PositiveNumber)->capture_default_str();
    add_common(speedup_cmd, flags);

    VerifyOptions verify;
    std::string inject;
    auto* verify_cmd = app.add_subcommand("verify", "Run the self-check suite");
    verify_cmd->add_option("--fuzz", verify.fuzz_configs, "Random configurations for the identity check")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    verify_cmd->add_option("--inject", inject, "Deliberately break the simulator")
        ->check(CLI::IsMember({"tie-break", "delay-off-by-one"}));
    add_common(verify_cmd, flags);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "asyncsgd: " << e.what() << '\n';
        if (app.get_subcommands().empty()) err << app.help();
        return kExitUsage;
    }

    try {
        if (simulate_cmd->parsed()) return cmd_simulate(config_path, flags, out);
        if (tune_cmd->parsed()) return cmd_tune(config_path, flags, out);
        if (scaling_cmd->parsed()) {
            scaling.seed = flags.seed.value_or(0);
            scaling.threads = flags.threads;
            return cmd_scaling(scaling, flags, out);
        }
        if (compare_cmd->parsed()) return cmd_compare(config_path, straggler, flags, out);
        if (speedup_cmd->parsed()) return cmd_speedup(deltas, tau_c, method, samples, flags, out);
        if (verify_cmd->parsed()) {
            verify.seed = flags.seed.value_or(0);
            verify.faults.invert_tie_break = inject == "tie-break";
            verify.faults.delay_off_by_one = inject == "delay-off-by-one";
            return cmd_verify(verify, flags, out);
        }
    } catch (const InvalidConfigError& e) {
        err << "asyncsgd: invalid config: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InvalidSpecError& e) {
        err << "asyncsgd: invalid input: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "asyncsgd: error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}

}  // namespace asyncsgd::cli
