#include "asyncsgd/stepsize.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace asyncsgd {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

double theoretical_eta_thm1(double smoothness, Iteration tau_max, Iteration concurrency, double sigma, double r0,
                            Iteration horizon) {
    const double delay_branch =
        1.0 / (2.0 * smoothness * std::sqrt(static_cast<double>(tau_max) * static_cast<double>(concurrency)));
    if (sigma == 0.0) return delay_branch;
    const double noise_branch =
        std::sqrt(r0 / (2.0 * smoothness * sigma * sigma * static_cast<double>(horizon + 1)));
    return std::min(delay_branch, noise_branch);
}

double stepsize_at(const StepsizePolicy& policy, Iteration /*t*/, Iteration tau) {
    return std::visit(
        Overloaded{
            [](const ConstantStepsize& p) { return p.eta; },
            [tau](const DelayAdaptiveStepsize& p) {
                if (tau <= p.concurrency) return p.eta;
                if (p.mode == AdaptiveMode::kDrop) return 0.0;
                const double cap = 1.0 / (4.0 * p.smoothness * static_cast<double>(tau));
                return std::min(p.eta, cap) * kStrictShave;
            },
            [](const TheoreticalStepsize& p) {
                return theoretical_eta_thm1(p.smoothness, p.tau_max, p.concurrency, p.sigma, p.r0, p.horizon);
            },
        },
        policy);
}

AdaptiveEtaCap delay_adaptive_eta_cap(double smoothness, Iteration concurrency) {
    AdaptiveEtaCap cap{};
    cap.global_bound = 1.0 / (4.0 * smoothness);
    cap.concurrency_bound = 1.0 / (4.0 * smoothness * static_cast<double>(concurrency));
    cap.tighter = std::min(cap.global_bound, cap.concurrency_bound);
    cap.discrepancy = concurrency > 1;
    return cap;
}

std::string to_string(AdaptiveMode m) {
    return m == AdaptiveMode::kDrop ? "drop" : "scale";
}

std::string to_string(TuneCriterion c) {
    return c == TuneCriterion::kMinFinalError ? "min_final_error" : "min_T_to_eps";
}

nlohmann::json stepsize_to_json(const StepsizePolicy& policy) {
    return std::visit(Overloaded{
                          [](const ConstantStepsize& p) -> nlohmann::json {
                              return {{"rule", "constant"}, {"eta", p.eta}};
                          },
                          [](const DelayAdaptiveStepsize& p) -> nlohmann::json {
                              return {{"rule", "delay_adaptive"},
                                      {"eta", p.eta},
                                      {"L", p.smoothness},
                                      {"tau_c", p.concurrency},
                                      {"mode", to_string(p.mode)}};
                          },
                          [](const TheoreticalStepsize& p) -> nlohmann::json {
                              return {{"rule", "theoretical"}, {"L", p.smoothness}, {"tau_max", p.tau_max},
                                      {"tau_c", p.concurrency}, {"sigma", p.sigma},   {"r0", p.r0},
                                      {"T", p.horizon}};
                          },
                      },
                      policy);
}

StepsizePolicy stepsize_from_json(const nlohmann::json& doc) {
    const auto rule = doc.at("rule").get<std::string>();
    if (rule == "constant") return ConstantStepsize{doc.at("eta").get<double>()};
    if (rule == "delay_adaptive") {
        DelayAdaptiveStepsize p;
        p.eta = doc.at("eta").get<double>();
        p.smoothness = doc.at("L").get<double>();
        p.concurrency = doc.at("tau_c").get<Iteration>();
        const auto mode = doc.value("mode", std::string("scale"));
        if (mode != "scale" && mode != "drop") throw InvalidConfigError("stepsize.mode must be scale or drop");
        p.mode = mode == "drop" ? AdaptiveMode::kDrop : AdaptiveMode::kScale;
        return p;
    }
    if (rule == "theoretical") {
        TheoreticalStepsize p;
        p.smoothness = doc.at("L").get<double>();
        p.tau_max = doc.at("tau_max").get<Iteration>();
        p.concurrency = doc.at("tau_c").get<Iteration>();
        p.sigma = doc.value("sigma", 0.0);
        p.r0 = doc.value("r0", 0.0);
        p.horizon = doc.value("T", Iteration{0});
        return p;
    }
    throw InvalidConfigError("unknown stepsize rule '" + rule + "'");
}

// ---------------------------------------------------------------------------------------------

std::vector<double> log_grid(double lo, double hi, int points_per_decade) {
    if (!(lo > 0.0) || !(hi >= lo) || points_per_decade < 1) throw InvalidConfigError("bad log grid bounds");
    const double decades = std::log10(hi / lo);
    const auto steps = static_cast<int>(std::lround(decades * points_per_decade));
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(steps) + 1);
    const double base = std::log10(lo);
    for (int i = 0; i <= steps; ++i) {
        grid.push_back(std::pow(10.0, base + static_cast<double>(i) / points_per_decade));
    }
    return grid;
}

std::vector<double> default_log_grid(int points_per_decade) {
    return log_grid(1e-5, 1e2, points_per_decade);
}

nlohmann::json TuningReport::to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points) {
        pts.push_back({{"eta", p.eta},
                       {"final_error", std::isfinite(p.outcome.final_error) ? nlohmann::json(p.outcome.final_error)
                                                                           : nlohmann::json(nullptr)},
                       {"iterations", p.outcome.iterations},
                       {"reached_eps", p.outcome.reached_eps},
                       {"diverged", p.outcome.diverged},
                       {"wall_time", p.outcome.wall_time},
                       {"pruned", p.pruned}});
    }
    return {{"criterion", to_string(criterion)},
            {"grid", std::move(pts)},
            {"chosen_eta", best_eta},
            {"chosen_index", best_index},
            {"on_edge", on_edge},
            {"fell_back", fell_back}};
}

TuningReport grid_tune(const TuneRun& run, const std::vector<double>& grid, TuneCriterion criterion, int threads) {
    if (grid.empty()) throw InvalidConfigError("tuning grid is empty");
    if (!std::is_sorted(grid.begin(), grid.end())) throw InvalidConfigError("tuning grid must be sorted ascending");

    TuningReport report;
    report.criterion = criterion;
    report.points.resize(grid.size());
    const bool prune = criterion == TuneCriterion::kMinIterationsToEps;

    // Largest stepsizes first: they either converge fastest or diverge quickly. Points are
    // run in waves of `threads`; every run in a wave shares the budget fixed before the wave,
    // which keeps the report independent of thread timing.
    const auto wave = static_cast<std::size_t>(std::clamp(threads, 1, static_cast<int>(grid.size())));
    Iteration best_iterations = 0;  // 0: nothing reached eps yet
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto evaluate = [&](std::size_t i, Iteration budget) {
        try {
            TuneOutcome out;
            try {
                out = run(grid[i], budget);
            } catch (const NumericDomainError&) {
                out.diverged = true;
                out.final_error = std::numeric_limits<double>::infinity();
            }
            if (!std::isfinite(out.final_error)) out.diverged = true;
            const bool pruned = budget > 0 && !out.reached_eps && !out.diverged && out.iterations >= budget;
            report.points[i] = TunePoint{grid[i], out, pruned};
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    for (std::size_t first = 0; first < grid.size() && !failure; first += wave) {
        const std::size_t last = std::min(grid.size(), first + wave);
        const Iteration budget = prune ? best_iterations : 0;
        if (wave == 1) {
            evaluate(grid.size() - 1 - first, budget);
        } else {
            std::vector<std::jthread> pool;
            for (std::size_t k = first; k < last; ++k) pool.emplace_back(evaluate, grid.size() - 1 - k, budget);
        }
        for (std::size_t k = first; k < last; ++k) {
            const auto& o = report.points[grid.size() - 1 - k].outcome;
            if (prune && o.reached_eps && !o.diverged && (best_iterations == 0 || o.iterations < best_iterations)) {
                best_iterations = o.iterations;
            }
        }
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<std::size_t> alive;
    std::string diverged_list;
    for (std::size_t i = 0; i < report.points.size(); ++i) {
        if (report.points[i].outcome.diverged) {
            diverged_list += (diverged_list.empty() ? "" : ", ") + std::to_string(report.points[i].eta);
        } else {
            alive.push_back(i);
        }
    }
    if (alive.empty()) throw TuningFailed("every grid point diverged: " + diverged_list);

    auto better_error = [&](std::size_t a, std::size_t b) {
        // `a` strictly better than `b`, ties to the larger stepsize (later index).
        const auto& oa = report.points[a].outcome;
        const auto& ob = report.points[b].outcome;
        return oa.final_error < ob.final_error || (oa.final_error == ob.final_error && a > b);
    };
    auto better_iters = [&](std::size_t a, std::size_t b) {
        const auto& oa = report.points[a].outcome;
        const auto& ob = report.points[b].outcome;
        return oa.iterations < ob.iterations || (oa.iterations == ob.iterations && a > b);
    };

    std::optional<std::size_t> best;
    if (criterion == TuneCriterion::kMinIterationsToEps) {
        for (std::size_t i : alive) {
            if (!report.points[i].outcome.reached_eps) continue;
            if (!best || better_iters(i, *best)) best = i;
        }
        if (!best) report.fell_back = true;
    }
    if (!best) {
        for (std::size_t i : alive) {
            if (!best || better_error(i, *best)) best = i;
        }
    }
    report.best_index = *best;
    report.best_eta = grid[*best];
    report.on_edge = *best == 0 || *best + 1 == grid.size();
    return report;
}

}  // namespace asyncsgd
