#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "asyncsgd/cli/verify.hpp"
#include "asyncsgd/engine.hpp"
#include "asyncsgd/metrics.hpp"
#include "oracles.hpp"

using namespace asyncsgd;

namespace {

RunTrace run(std::vector<double> deltas, Iteration T, SchedulerPolicy policy = MaxConcurrency{}) {
    SimulationConfig cfg;
    cfg.objective = make_quadratic(2, 1.0, 2.0, 1);
    cfg.workers = constant_workers(deltas);
    cfg.scheduler = std::move(policy);
    cfg.x0 = Vector::Ones(2);
    cfg.stepsize = ConstantStepsize{0.01};
    cfg.stop = FixedIterations{T};
    return simulate(cfg);
}

}  // namespace

TEST_CASE("tau_avg: serial SGD is zero") {
    const auto avg = tau_avg(run({1.0}, 10).ledger);
    CHECK(avg.value == 0.0);
    CHECK(avg.convention == InFlightConvention::kExcludeNextToFinish);
    CHECK(avg.denominator == 10);
}

TEST_CASE("tau_avg: two equal workers alternate, giving (T-1)/(T+1)") {
    for (Iteration T : {5, 10, 101}) {
        const auto trace = run({1.0, 1.0}, T);
        CHECK(trace.ledger.applied[0].delay == 0);
        for (Iteration t = 1; t < T; ++t) CHECK(trace.ledger.applied[static_cast<std::size_t>(t)].delay == 1);
        const auto avg = tau_avg(trace.ledger);
        CHECK(avg.numerator == T - 1);
        CHECK(avg.denominator == T + 1);
    }
}

TEST_CASE("tau_avg: mini-batch n=2, two batches") {
    const auto trace = run({1.0, 1.0}, 4, MiniBatch{});
    std::vector<Iteration> delays;
    for (const auto& a : trace.ledger.applied) delays.push_back(a.delay);
    CHECK(delays == std::vector<Iteration>{0, 1, 0, 1});
    REQUIRE(trace.ledger.in_flight.size() == 2);
    for (const auto& j : trace.ledger.in_flight) CHECK(trace.ledger.pending_delay(j) == 0);
    const auto avg = tau_avg(trace.ledger);
    CHECK(avg.numerator == 2);
    CHECK(avg.denominator == 5);
    CHECK(tau_avg(trace.ledger, InFlightConvention::kIncludeAll).denominator == 6);
}

TEST_CASE("tau_avg needs at least one applied gradient") {
    DelayLedger empty;
    CHECK_THROWS_AS(tau_avg(empty), InvalidSpecError);
}

TEST_CASE("tau_max examples") {
    CHECK(tau_max(run({1.0}, 20).ledger) == 0);
    // Second worker never finishes inside the horizon.
    CHECK(tau_max(run({1.0, 1000.0}, 50).ledger) == 50);
    for (int n : {2, 3, 5, 8}) {
        CHECK(tau_max(run(std::vector<double>(static_cast<std::size_t>(n), 1.0), 10L * n, MiniBatch{}).ledger) == n - 1);
    }
}

TEST_CASE("tau_avg <= tau_max on random runs") {
    Rng rng(3);
    for (int k = 0; k < 100; ++k) {
        auto cfg = cli::random_fuzz_config(rng, 500);
        const auto trace = simulate(cfg);
        if (trace.iterations() < 1) continue;
        CHECK(tau_avg(trace.ledger).value <= static_cast<double>(tau_max(trace.ledger)));
    }
}

TEST_CASE("remark5_check: serial T=3 gives 4 = 4") {
    const auto r = remark5_check(run({1.0}, 3).ledger);
    CHECK(r.lhs == 4);
    CHECK(r.rhs == 4);
    CHECK(r.pass);
    CHECK_NOTHROW(r.require());
}

TEST_CASE("remark5_check: hand-built serial ledger") {
    DelayLedger l;
    l.iterations = 3;
    for (Iteration t = 0; t < 3; ++t) l.applied.push_back({t, 0, 0, 0});
    l.in_flight.push_back({3, 0, 0, true});
    l.concurrency_log = {1, 1, 1, 1};
    l.samples_per_client = {4};
    const auto r = remark5_check(l);
    CHECK(r.lhs == 4);
    CHECK(r.rhs == 4);
    l.applied[1].delay = 1;
    const auto bad = remark5_check(l);
    CHECK_FALSE(bad.pass);
    CHECK_THROWS_AS(bad.require(), IdentityViolation);
}

TEST_CASE("remark5_check: constant concurrency c gives (T+1)c") {
    for (int c : {1, 2, 5, 9}) {
        std::vector<double> deltas;
        for (int i = 0; i < c; ++i) deltas.push_back(1.0 + 0.37 * i);
        const Iteration T = 123;
        const auto r = remark5_check(run(deltas, T).ledger);
        CHECK(r.pass);
        CHECK(r.rhs == (T + 1) * c);
    }
}

TEST_CASE("remark5_check: mini-batch n=2, one batch") {
    const auto trace = run({1.0, 1.0}, 2, MiniBatch{});
    // Applied delays 0, 1 (+1 each), two fresh jobs at T (delay 0, +1 each).
    const auto r = remark5_check(trace.ledger);
    CHECK(r.lhs == 1 + 2 + 1 + 1);
    CHECK(r.pass);
    CHECK(trace.ledger.concurrency_log == std::vector<Iteration>{2, 1, 2});
}

TEST_CASE("remark5_check holds on random configurations of every policy") {
    Rng rng(99);
    for (int k = 0; k < 150; ++k) {
        const auto trace = simulate(cli::random_fuzz_config(rng, 1500));
        const auto r = remark5_check(trace.ledger);
        CHECK(r.pass);
        CHECK(r.rhs == std::accumulate(trace.ledger.concurrency_log.begin(), trace.ledger.concurrency_log.end(),
                                       Iteration{0}));
        // Inclusive average expressed through mean concurrency.
        const auto f = tau_avg_inclusive(trace.ledger);
        const auto T = trace.iterations();
        const auto active = static_cast<Iteration>(trace.ledger.in_flight.size());
        if (T + active - 1 > 0) {
            CHECK(static_cast<double>(f.numerator) / static_cast<double>(f.denominator) ==
                  doctest::Approx(static_cast<double>(T + 1) / static_cast<double>(T + active - 1) *
                                  average_concurrency(trace.ledger)));
        }
    }
}

TEST_CASE("concurrency helpers") {
    const auto trace = run({1.0, 1.0, 1.0}, 9, MiniBatch{});
    CHECK(max_concurrency(trace.ledger) == 3);
    const auto f = concurrency_sum(trace.ledger);
    CHECK(f.denominator == 10);
    CHECK(average_concurrency(trace.ledger) == doctest::Approx(static_cast<double>(f.numerator) / 10.0));
}

TEST_CASE("per-client averages") {
    SUBCASE("never-sampled client is undefined, not zero") {
        DelayLedger l;
        l.iterations = 1;
        l.applied.push_back({0, 0, 0, 0});
        l.samples_per_client = {1, 0};
        CHECK(tau_avg_per_client(l, 0).value() == 0.0);
        CHECK_FALSE(tau_avg_per_client(l, 1).has_value());
        CHECK_FALSE(tau_avg_per_client(l, 7).has_value());
    }
    SUBCASE("a client that never finishes is dominated by its in-flight delay") {
        const auto trace = run({1.0, 1000.0}, 40);
        CHECK(tau_avg_per_client(trace.ledger, 1).value() == 40.0);
        CHECK(tau_avg_per_client(trace.ledger, 0).value() < 1.0);
    }
    SUBCASE("one client matches the global average with every in-flight job counted") {
        const auto trace = run({1.0}, 30);
        const auto global = tau_avg(trace.ledger, InFlightConvention::kIncludeAll);
        CHECK(tau_avg_per_client(trace.ledger, 0).value() == doctest::Approx(global.value));
    }
    SUBCASE("four equal clients, long run: within 10% of each other") {
        // Identically distributed compute times. With equal constant times every round ends in
        // an exact tie, and the id tie-break orders the per-client delays by id.
        const auto fam = make_heterogeneous(make_quadratic(2, 1.0, 2.0, 1), 4, 0.5, 2);
        std::vector<WorkerModel> workers = constant_workers({1.0, 1.0, 1.0, 1.0});
        for (auto& w : workers) w.compute = LogNormalTime{0.0, 0.3};
        const auto trace = run_heterogeneous(fam, NoiseModel{}, workers, 4, ConstantStepsize{0.01}, Vector::Zero(2),
                                             FixedIterations{40000}, 11);
        std::vector<double> avgs;
        for (int c = 0; c < 4; ++c) avgs.push_back(tau_avg_per_client(trace.ledger, c).value());
        const auto [lo, hi] = std::minmax_element(avgs.begin(), avgs.end());
        CHECK(*hi <= 1.1 * *lo);
    }
}

TEST_CASE("last-k error estimate") {
    SUBCASE("linearly decreasing norms: 14.5 above the final value") {
        std::vector<double> g;
        const int T = 100;
        for (int t = 0; t <= T; ++t) g.push_back(static_cast<double>(T - t) + 3.0);
        const auto e = error_estimate_last_k(g, 30);
        CHECK(e.value == doctest::Approx(3.0 + 14.5));
        CHECK_FALSE(e.truncated);
        CHECK(e.window == 30);
    }
    SUBCASE("k = 1 is the last norm") { CHECK(error_estimate_last_k({5.0, 4.0, 2.5}, 1).value == 2.5); }
    SUBCASE("constant trace") { CHECK(error_estimate_last_k(std::vector<double>(50, 0.7), 30).value == doctest::Approx(0.7)); }
    SUBCASE("short trace is averaged whole and flagged") {
        const auto e = error_estimate_last_k({1.0, 2.0, 3.0}, 30);
        CHECK(e.truncated);
        CHECK(e.window == 3);
        CHECK(e.value == 2.0);
    }
    SUBCASE("bad inputs") {
        CHECK_THROWS_AS(error_estimate_last_k({1.0}, 0), InvalidSpecError);
        CHECK_THROWS_AS(error_estimate_last_k(std::vector<double>{}, 3), InvalidSpecError);
    }
    SUBCASE("from a trace with and without records") {
        SimulationConfig cfg;
        cfg.objective = make_quadratic(3, 1.0, 2.0, 1);
        cfg.workers = constant_workers({1.0, 2.0});
        cfg.x0 = Vector::Ones(3);
        cfg.stepsize = ConstantStepsize{0.05};
        cfg.stop = FixedIterations{200};
        const auto full = simulate(cfg);
        cfg.keep_records = false;
        const auto lean = simulate(cfg);
        CHECK(full.grad_norm_series().size() == 201);
        CHECK(error_estimate_last_k(full, 30).value == doctest::Approx(error_estimate_last_k(lean, 30).value));
    }
}

TEST_CASE("weighted gradient averages") {
    SimulationConfig cfg;
    cfg.objective = make_quadratic(3, 1.0, 2.0, 1);
    cfg.workers = constant_workers({1.0, 1.5, 4.0});
    cfg.x0 = Vector::Ones(3);
    cfg.stepsize = ConstantStepsize{0.05};
    cfg.stop = FixedIterations{120};
    const auto trace = simulate(cfg);
    double plain = 0.0;
    for (const auto& r : trace.records) plain += r.grad_norm * r.grad_norm;
    plain /= static_cast<double>(trace.records.size());
    CHECK(weighted_grad_average(trace, GradWeights::kUniform).value() == doctest::Approx(plain));
    // |A_t| = 1 under max-concurrency.
    CHECK(weighted_grad_average(trace, GradWeights::kAssigned).value() == doctest::Approx(plain));

    cfg.stepsize = DelayAdaptiveStepsize{0.05, 4.0, 1, AdaptiveMode::kDrop};
    const auto dropped = simulate(cfg);
    double num = 0.0;
    double den = 0.0;
    for (const auto& r : dropped.records) {
        if (r.delay > 1) continue;
        num += r.grad_norm * r.grad_norm;
        den += 1.0;
    }
    CHECK(weighted_grad_average(dropped, GradWeights::kStepsize).value() == doctest::Approx(num / den));

    cfg.stepsize = ConstantStepsize{0.0};
    CHECK_FALSE(weighted_grad_average(simulate(cfg), GradWeights::kStepsize).has_value());
}

TEST_CASE("mini-batch: mean applied delay within a batch is (n-1)/2") {
    for (int n : {2, 4, 7}) {
        const auto trace = run(std::vector<double>(static_cast<std::size_t>(n), 1.0), 5L * n, MiniBatch{});
        for (int b = 0; b < 5; ++b) {
            double sum = 0.0;
            for (int i = 0; i < n; ++i) sum += static_cast<double>(trace.ledger.applied[static_cast<std::size_t>(b * n + i)].delay);
            CHECK(sum / n == doctest::Approx((n - 1) / 2.0));
        }
    }
}

TEST_CASE("metrics summary has the documented keys") {
    const auto j = metrics_summary(run({1.0, 3.0}, 50));
    for (const char* key : {"tau_avg", "tau_max", "tau_avg_per_client", "avg_concurrency", "remark5", "error_last30"}) {
        CHECK(j.contains(key));
    }
    CHECK(j["remark5"]["pass"].get<bool>());
    CHECK(j["tau_max"].get<Iteration>() == 3);
}
