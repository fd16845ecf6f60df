#include "asyncsgd/cli/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "asyncsgd/metrics.hpp"
#include "asyncsgd/speedup.hpp"

namespace asyncsgd::cli {
namespace {

std::string str(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

double relative_error(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale;
}

}  // namespace

bool VerifyReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

nlohmann::json VerifyReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : checks) rows.push_back({{"check", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    return {{"pass", all_pass()}, {"checks", std::move(rows)}};
}

void VerifyReport::print(std::ostream& os) const {
    for (const auto& c : checks) os << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    os << (all_pass() ? "all checks passed" : "verification FAILED") << '\n';
}

// ---------------------------------------------------------------------------------------------

SimulationConfig random_fuzz_config(Rng& rng, Iteration max_iterations) {
    SimulationConfig cfg;
    const int n = 1 + static_cast<int>(rng.uniform_index(16));
    const int policy = static_cast<int>(rng.uniform_index(5));
    cfg.seed = rng.next_seed();

    for (int w = 0; w < n; ++w) {
        WorkerModel m;
        m.id = w;
        switch (rng.uniform_index(3)) {
            case 0: m.compute = ConstantTime{1.0 + static_cast<double>(rng.uniform_index(8))}; break;
            case 1: m.compute = LogNormalTime{rng.normal(), 0.1 + rng.uniform()}; break;
            default: m.compute = StragglerTime{0.5 + rng.uniform(), 5.0 + 50.0 * rng.uniform(), 0.2 * rng.uniform()};
        }
        cfg.workers.push_back(m);
    }

    switch (policy) {
        case 0: {
            MaxConcurrency p;
            for (int w = 0; w < n; ++w) {
                if (rng.uniform() < 0.7) p.initial.push_back(w);
            }
            if (p.initial.empty()) p.initial.push_back(static_cast<WorkerId>(rng.uniform_index(n)));
            cfg.scheduler = p;
            break;
        }
        case 1: cfg.scheduler = MiniBatch{}; break;
        case 2: {
            CustomSchedule p;
            p.initial.push_back(0);
            auto stream = std::make_shared<Rng>(rng.next_seed());
            const double keep = rng.uniform();
            p.select = [stream, keep](const ScheduleContext& ctx) {
                std::vector<WorkerId> chosen;
                for (WorkerId w : ctx.idle) {
                    if (stream->uniform() < keep) chosen.push_back(w);
                }
                if (chosen.empty() && ctx.in_flight == 0) chosen.push_back(ctx.idle.front());
                return chosen;
            };
            cfg.scheduler = p;
            break;
        }
        case 3:
            cfg.scheduler = UniformClientSampling{1 + rng.uniform_index(2 * n), rng.uniform() < 0.5};
            break;
        default: cfg.scheduler = SampledMiniBatch{1 + rng.uniform_index(n)}; break;
    }

    Matrix a(2, 2);
    a << 2.0, 0.3, 0.3, 1.0;
    cfg.objective = std::make_shared<QuadraticObjective>(a, Vector::Ones(2));
    cfg.noise = NoiseModel{rng.uniform()};
    cfg.stepsize = ConstantStepsize{0.01};
    cfg.x0 = Vector::Zero(2);
    cfg.stop = FixedIterations{rng.uniform_index(max_iterations + 1)};
    cfg.keep_records = false;
    return cfg;
}

CheckResult check_concurrency_identity(const VerifyOptions& opts) {
    CheckResult out{"concurrency_identity_fuzz", true, ""};
    Rng rng(derive_seed(opts.seed, "verify-identity"));
    for (int i = 0; i < opts.fuzz_configs; ++i) {
        SimulationConfig cfg = random_fuzz_config(rng, opts.fuzz_max_iterations);
        cfg.faults = opts.faults;
        const RunTrace trace = simulate(std::move(cfg));
        const auto r = remark5_check(trace.ledger);
        if (!r.pass) {
            out.pass = false;
            out.detail = "config " + std::to_string(i) + ": lhs " + std::to_string(r.lhs) + " != rhs " +
                         std::to_string(r.rhs);
            return out;
        }
    }
    out.detail = std::to_string(opts.fuzz_configs) + " configurations, exact equality";
    return out;
}

CheckResult check_speedup_oracle(const VerifyOptions& opts, int monte_carlo_inputs) {
    CheckResult out{"speedup_oracle", true, ""};
    const auto reference = make_speedup_input(parse_deltas("900x10,100x60"), 10);
    const double a = async_time(reference);
    const double m = minibatch_time(reference);
    if (a != 15.0 || m < 42.4 || m > 42.7) {
        out.pass = false;
        out.detail = "reference example: async " + str(a) + ", mini-batch " + str(m);
        return out;
    }

    Rng rng(derive_seed(opts.seed, "verify-speedup"));
    int exhaustive = 0;
    double worst_exhaustive = 0.0;
    for (int n = 1; n <= 6; ++n) {
        for (std::int64_t c = 1; c <= 7; ++c) {
            if (std::pow(n, static_cast<double>(c)) > 1e5) continue;
            std::vector<double> deltas;
            for (int i = 0; i < n; ++i) deltas.push_back(1.0 + 99.0 * rng.uniform());
            const auto in = make_speedup_input(deltas, c);
            const auto oracle = minibatch_time_oracle(in, OracleMethod::kExhaustive);
            worst_exhaustive = std::max(worst_exhaustive, relative_error(minibatch_time(in), oracle.estimate));
            ++exhaustive;
        }
    }
    if (worst_exhaustive > 1e-12) {
        out.pass = false;
        out.detail = "exhaustive oracle relative error " + str(worst_exhaustive);
        return out;
    }

    int within = 0;
    for (int k = 0; k < monte_carlo_inputs; ++k) {
        const int n = 2 + static_cast<int>(rng.uniform_index(49));
        const std::int64_t c = 1 + rng.uniform_index(20);
        std::vector<double> deltas;
        for (int i = 0; i < n; ++i) deltas.push_back(1.0 + 99.0 * rng.uniform());
        const auto in = make_speedup_input(deltas, c);
        const auto oracle = minibatch_time_oracle(in, OracleMethod::kMonteCarlo, 100000, rng.next_seed());
        if (std::abs(oracle.estimate - minibatch_time(in)) <= 3.0 * oracle.stderr_) ++within;
    }
    if (within != monte_carlo_inputs) out.pass = false;
    out.detail = "reference example 15 / " + str(m) + "; " + std::to_string(exhaustive) +
                 " exhaustive inputs, worst relative error " + str(worst_exhaustive) + "; Monte-Carlo within 3 SE on " +
                 std::to_string(within) + "/" + std::to_string(monte_carlo_inputs);
    return out;
}

std::vector<Vector> direct_minibatch_iterates(const SimulationConfig& cfg, Iteration iterations) {
    const int n = static_cast<int>(cfg.workers.size());
    std::vector<std::pair<double, WorkerId>> order;
    for (const auto& w : cfg.workers) {
        const auto* c = std::get_if<ConstantTime>(&w.compute);
        if (!c) throw InvalidConfigError("direct mini-batch: constant compute times only");
        order.emplace_back(c->delta, w.id);
    }
    std::sort(order.begin(), order.end());
    const auto* step = std::get_if<ConstantStepsize>(&cfg.stepsize);
    if (!step) throw InvalidConfigError("direct mini-batch: constant stepsize only");

    std::vector<Rng> noise;
    for (int w = 0; w < n; ++w) noise.emplace_back(derive_seed(cfg.seed, streams::kNoise, static_cast<std::uint64_t>(w)));

    std::vector<Vector> iterates{cfg.x0};
    Vector x = cfg.x0;
    while (static_cast<Iteration>(iterates.size()) <= iterations) {
        const Vector round_point = x;
        std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n));
        for (int w = 0; w < n; ++w) seeds[static_cast<std::size_t>(w)] = noise[static_cast<std::size_t>(w)].next_seed();
        for (const auto& [delta, w] : order) {
            if (static_cast<Iteration>(iterates.size()) > iterations) break;
            Rng data(seeds[static_cast<std::size_t>(w)]);
            x -= step->eta * stochastic_gradient(*cfg.objective, 0, round_point, cfg.noise, data);
            iterates.push_back(x);
        }
    }
    return iterates;
}

CheckResult check_minibatch_oracle(const VerifyOptions& opts, int objectives) {
    CheckResult out{"minibatch_oracle", true, ""};
    Rng rng(derive_seed(opts.seed, "verify-minibatch"));
    double worst = 0.0;
    int runs = 0;
    for (int k = 0; k < objectives; ++k) {
        for (int n : {2, 4, 8}) {
            SimulationConfig cfg;
            cfg.objective = make_quadratic(5, 1.0, 2.0, rng.next_seed());
            cfg.noise = NoiseModel{0.5};
            std::vector<double> deltas;
            for (int w = 0; w < n; ++w) deltas.push_back(1.0 + static_cast<double>(rng.uniform_index(5)));
            cfg.workers = constant_workers(deltas);
            cfg.scheduler = MiniBatch{};
            cfg.stepsize = ConstantStepsize{0.05};
            cfg.x0 = rng.normal_vector(5);
            cfg.seed = rng.next_seed();
            cfg.faults = opts.faults;
            const Iteration T = 8L * n;
            cfg.stop = FixedIterations{T};

            const auto expected = direct_minibatch_iterates(cfg, T);
            Simulator sim(cfg);
            for (Iteration t = 1; t <= T; ++t) {
                sim.advance();
                const Vector& got = sim.point();
                const Vector& want = expected[static_cast<std::size_t>(t)];
                for (Eigen::Index i = 0; i < got.size(); ++i) worst = std::max(worst, relative_error(got[i], want[i]));
            }
            ++runs;
        }
    }
    out.pass = worst <= 1e-12;
    out.detail = std::to_string(runs) + " runs, worst per-coordinate relative difference " + str(worst);
    return out;
}

CheckResult check_finite_differences(const VerifyOptions& opts) {
    CheckResult out{"finite_differences", true, ""};
    Rng rng(derive_seed(opts.seed, "verify-fd"));
    const auto quad = make_quadratic(6, 1.0, 2.0, rng.next_seed());
    const std::vector<std::pair<std::string, ObjectivePtr>> families{
        {"quadratic", quad},
        {"logistic", make_logistic(30, 6, rng.next_seed())},
        {"heterogeneous", make_heterogeneous(quad, 4, 1.5, rng.next_seed())},
    };
    double worst = 0.0;
    for (const auto& [name, obj] : families) {
        for (int p = 0; p < 10; ++p) {
            const Vector x = rng.normal_vector(obj->dim());
            for (ClientId c = 0; c < obj->num_clients(); ++c) {
                const Vector g = obj->client_gradient(c, x);
                Vector fd(obj->dim());
                for (Eigen::Index i = 0; i < obj->dim(); ++i) {
                    const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
                    Vector xp = x;
                    Vector xm = x;
                    xp[i] += h;
                    xm[i] -= h;
                    fd[i] = (obj->client_value(c, xp) - obj->client_value(c, xm)) / (2.0 * h);
                }
                worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-12));
            }
        }
    }
    out.pass = worst <= 1e-6;
    out.detail = "30 points over 3 families, worst relative error " + str(worst);
    return out;
}

CheckResult check_noise_calibration(const VerifyOptions& opts) {
    CheckResult out{"noise_calibration", true, ""};
    Rng rng(derive_seed(opts.seed, "verify-noise"));
    const NoiseModel noise{2.0};
    const int samples = 20000;
    const Eigen::Index dim = 8;
    double sum = 0.0;
    double sum_sq = 0.0;
    Vector mean = Vector::Zero(dim);
    for (int s = 0; s < samples; ++s) {
        const Vector v = noise.sample(rng, dim);
        const double q = v.squaredNorm();
        sum += q;
        sum_sq += q * q;
        mean += v;
    }
    const double avg = sum / samples;
    const double se = std::sqrt((sum_sq / samples - avg * avg) / samples);
    mean /= samples;
    const double target = noise.sigma * noise.sigma;
    // Each mean coordinate has standard deviation sigma / sqrt(d * samples).
    const double mean_se = noise.sigma / std::sqrt(static_cast<double>(dim) * samples);
    out.pass = std::abs(avg - target) <= 5.0 * se && mean.cwiseAbs().maxCoeff() <= 5.0 * mean_se;
    out.detail = "E||xi||^2 = " + str(avg) + " (target " + str(target) + ", SE " + str(se) + "), max |mean| " +
                 str(mean.cwiseAbs().maxCoeff());
    return out;
}

std::uint64_t schedule_hash(const RunTrace& trace) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::int64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= static_cast<std::uint64_t>(v >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& a : trace.ledger.applied) {
        mix(a.worker);
        mix(a.delay);
    }
    return h;
}

SimulationConfig determinism_config(const FaultInjection& faults) {
    SimulationConfig cfg;
    cfg.objective = make_quadratic(4, 1.0, 2.0, 11);
    cfg.noise = NoiseModel{1.0};
    cfg.workers = constant_workers({1.0, 1.0, 1.0, 2.0});
    cfg.scheduler = MaxConcurrency{};
    cfg.stepsize = ConstantStepsize{0.05};
    cfg.x0 = Vector::Zero(4);
    cfg.stop = FixedIterations{64};
    cfg.seed = 5;
    cfg.faults = faults;
    return cfg;
}

CheckResult check_determinism(const VerifyOptions& opts) {
    CheckResult out{"determinism", true, ""};
    const RunTrace first = simulate(determinism_config(opts.faults));
    const RunTrace second = simulate(determinism_config(opts.faults));
    const std::uint64_t h = schedule_hash(first);
    const bool repeat = h == schedule_hash(second) && first.final_point == second.final_point;
    std::ostringstream hex;
    hex << std::hex << h;
    out.pass = repeat && h == kDeterminismGolden;
    out.detail = "schedule hash " + hex.str() + (h == kDeterminismGolden ? " matches" : " differs from") +
                 " the reference" + (repeat ? ", repeat run identical" : ", repeat run differs");
    return out;
}

VerifyReport run_verify(const VerifyOptions& opts) {
    VerifyReport report;
    report.checks.push_back(check_concurrency_identity(opts));
    report.checks.push_back(check_speedup_oracle(opts));
    report.checks.push_back(check_minibatch_oracle(opts));
    report.checks.push_back(check_finite_differences(opts));
    report.checks.push_back(check_noise_calibration(opts));
    report.checks.push_back(check_determinism(opts));
    return report;
}

}  // namespace asyncsgd::cli
