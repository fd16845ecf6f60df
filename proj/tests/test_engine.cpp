#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "asyncsgd/engine.hpp"
#include "asyncsgd/metrics.hpp"
#include "oracles.hpp"

using namespace asyncsgd;

namespace {

SimulationConfig base_config(std::vector<double> deltas, Iteration T, double sigma = 0.0) {
    SimulationConfig cfg;
    cfg.objective = make_quadratic(4, 1.0, 2.0, 1);
    cfg.noise = NoiseModel{sigma};
    cfg.workers = constant_workers(deltas);
    cfg.scheduler = MaxConcurrency{};
    cfg.stepsize = ConstantStepsize{0.05};
    cfg.x0 = Vector::Ones(4);
    cfg.stop = FixedIterations{T};
    cfg.seed = 17;
    return cfg;
}

}  // namespace

TEST_CASE("one worker is serial SGD with zero delays") {
    for (int policy = 0; policy < 3; ++policy) {
        auto cfg = base_config({2.5}, 50, 0.3);
        if (policy == 1) cfg.scheduler = MiniBatch{};
        if (policy == 2) cfg.scheduler = table_schedule({0}, [] {
            std::vector<std::pair<Iteration, std::vector<WorkerId>>> t;
            for (Iteration i = 0; i < 50; ++i) t.push_back({i, {0}});
            return t;
        }());
        const RunTrace trace = simulate(cfg);
        REQUIRE(trace.records.size() == 50);
        for (std::size_t t = 0; t < trace.records.size(); ++t) {
            CHECK(trace.records[t].t == static_cast<Iteration>(t));
            CHECK(trace.records[t].delay == 0);
        }
        // Serial loop with the same data seeds.
        Rng noise(derive_seed(cfg.seed, streams::kNoise, 0));
        Vector x = cfg.x0;
        for (int t = 0; t < 50; ++t) {
            Rng data(noise.next_seed());
            x = x - 0.05 * stochastic_gradient(*cfg.objective, 0, x, cfg.noise, data);
        }
        CHECK(x == trace.final_point);
    }
}

TEST_CASE("two workers, the second x times slower: tau_max = x") {
    for (int x : {1, 2, 8, 16, 33}) {
        const RunTrace trace = simulate(base_config({1.0, static_cast<double>(x)}, 400));
        CHECK(tau_max(trace.ledger) == x);
        Iteration max_applied = 0;
        for (const auto& a : trace.ledger.applied) max_applied = std::max(max_applied, a.delay);
        CHECK(max_applied == x);
    }
}

TEST_CASE("mini-batch policy matches a straight-line mini-batch SGD") {
    for (int n : {2, 3, 5}) {
        auto cfg = base_config(std::vector<double>(static_cast<std::size_t>(n), 1.0), 10L * n, 0.0);
        cfg.scheduler = MiniBatch{};
        if (n == 3) {
            cfg.workers = constant_workers({3.0, 1.0, 2.0});
            cfg.noise = NoiseModel{0.7};
        }
        std::vector<double> deltas;
        for (const auto& w : cfg.workers) deltas.push_back(std::get<ConstantTime>(w.compute).delta);
        const auto expected =
            oracle::minibatch_sgd(*cfg.objective, cfg.noise, deltas, 0.05, cfg.x0, cfg.seed, 10L * n);
        Simulator sim(cfg);
        for (Iteration t = 1; t <= 10L * n; ++t) {
            sim.advance();
            const Vector& want = expected[static_cast<std::size_t>(t)];
            for (Eigen::Index i = 0; i < want.size(); ++i) {
                CHECK(std::abs(sim.point()[i] - want[i]) <= 1e-12 * std::max(1.0, std::abs(want[i])));
            }
        }
    }
}

TEST_CASE("mini-batch: post-batch iterate is x_start - eta * sum of gradients at x_start") {
    auto cfg = base_config({1.0, 1.0, 1.0, 1.0}, 8);
    cfg.scheduler = MiniBatch{};
    Simulator sim(cfg);
    const Vector start = sim.point();
    for (int i = 0; i < 4; ++i) sim.advance();
    const Vector want = start - 4 * 0.05 * cfg.objective->gradient(start);
    CHECK((sim.point() - want).norm() < 1e-14);
}

TEST_CASE("advance: queue sizes per policy") {
    SUBCASE("max-concurrency keeps the queue size") {
        Simulator sim(base_config({1.0, 2.0, 3.0}, 30));
        const auto before = sim.event_queue_size();
        for (int i = 0; i < 20; ++i) {
            sim.advance();
            CHECK(sim.event_queue_size() == before);
            CHECK(sim.in_flight() == 3);
        }
    }
    SUBCASE("mini-batch mid-batch shrinks the queue by one") {
        auto cfg = base_config({1.0, 1.0, 1.0}, 30);
        cfg.scheduler = MiniBatch{};
        Simulator sim(cfg);
        CHECK(sim.event_queue_size() == 3);
        sim.advance();
        CHECK(sim.event_queue_size() == 2);
        sim.advance();
        CHECK(sim.event_queue_size() == 1);
        sim.advance();
        CHECK(sim.event_queue_size() == 3);
    }
}

TEST_CASE("equal finish times: lower worker id first") {
    const RunTrace trace = simulate(base_config({1.0, 1.0, 1.0}, 9));
    for (std::size_t t = 0; t < 9; ++t) CHECK(trace.records[t].worker == static_cast<WorkerId>(t % 3));
}

TEST_CASE("determinism: same config and seed give identical traces") {
    auto cfg = base_config({1.0, 1.3, 0.7}, 200, 1.0);
    cfg.workers[1].compute = LogNormalTime{0.0, 0.5};
    const RunTrace a = simulate(cfg);
    const RunTrace b = simulate(cfg);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].worker == b.records[i].worker);
        CHECK(a.records[i].grad_norm == b.records[i].grad_norm);
        CHECK(a.records[i].sim_time == b.records[i].sim_time);
    }
    CHECK(a.final_point == b.final_point);
    cfg.seed = 18;
    CHECK(simulate(cfg).final_point != a.final_point);
}

TEST_CASE("delays are non-negative and zero exactly when assigned at the previous update") {
    Rng rng(4);
    for (int k = 0; k < 20; ++k) {
        auto cfg = base_config({1.0, 1.0 + rng.uniform(), 3.0 * rng.uniform() + 0.1, 2.0}, 300);
        cfg.workers[2].compute = StragglerTime{1.0, 20.0, 0.05};
        const RunTrace trace = simulate(cfg);
        for (std::size_t t = 0; t < trace.ledger.applied.size(); ++t) {
            const auto& a = trace.ledger.applied[t];
            CHECK(a.delay >= 0);
            CHECK(a.delay == static_cast<Iteration>(t) - a.start);
            CHECK((a.delay == 0) == (a.start == static_cast<Iteration>(t)));
        }
    }
}

TEST_CASE("concurrency log agrees with job lifetimes") {
    Rng rng(12);
    for (int k = 0; k < 10; ++k) {
        auto cfg = base_config({1.0, 2.0, 3.0, 5.0}, 150);
        if (k % 2) cfg.scheduler = MiniBatch{};
        const RunTrace trace = simulate(cfg);
        CHECK(oracle::concurrency_from_lifetimes(trace.ledger) == trace.ledger.concurrency_log);
    }
}

TEST_CASE("client sampling: constant concurrency tau_C") {
    const auto fam = make_heterogeneous(make_quadratic(3, 1.0, 2.0, 1), 5, 1.0, 2);
    for (bool pile_up : {true, false}) {
        SimulationConfig cfg;
        cfg.objective = fam;
        cfg.workers = constant_workers({1.0, 2.0, 1.5, 0.5, 4.0});
        cfg.scheduler = UniformClientSampling{3, pile_up};
        cfg.x0 = Vector::Zero(3);
        cfg.stop = FixedIterations{500};
        cfg.stepsize = ConstantStepsize{0.01};
        const RunTrace trace = simulate(cfg);
        for (Iteration c : trace.ledger.concurrency_log) CHECK(c == 3);
        CHECK(oracle::concurrency_from_lifetimes(trace.ledger) == trace.ledger.concurrency_log);
    }
}

TEST_CASE("client sampling: queued jobs run in assignment order") {
    // One slow client that is sampled repeatedly: its jobs must be applied FIFO.
    const auto fam = make_heterogeneous(make_quadratic(2, 1.0, 2.0, 1), 2, 1.0, 2);
    SimulationConfig cfg;
    cfg.objective = fam;
    cfg.workers = constant_workers({1.0, 50.0});
    cfg.scheduler = UniformClientSampling{2, true};
    cfg.x0 = Vector::Zero(2);
    cfg.stop = FixedIterations{2000};
    cfg.seed = 3;
    const RunTrace trace = simulate(cfg);
    Iteration last_start = -1;
    for (const auto& a : trace.ledger.applied) {
        if (a.worker != 1) continue;
        CHECK(a.start >= last_start);
        last_start = a.start;
    }
}

TEST_CASE("run_heterogeneous: one client is serial SGD on f") {
    const auto base = make_quadratic(3, 1.0, 2.0, 5);
    const auto fam = make_heterogeneous(base, 1, 2.0, 6);
    const RunTrace het = run_heterogeneous(fam, NoiseModel{0.0}, constant_workers({1.0}), 1, ConstantStepsize{0.1},
                                           Vector::Ones(3), FixedIterations{40}, 1);
    Vector x = Vector::Ones(3);
    for (int t = 0; t < 40; ++t) x = x - 0.1 * base->gradient(x);
    CHECK((het.final_point - x).norm() < 1e-14);
    for (const auto& a : het.ledger.applied) CHECK(a.delay == 0);
}

TEST_CASE("run_heterogeneous: sampling counts concentrate around T/n") {
    const auto fam = make_heterogeneous(make_quadratic(3, 1.0, 2.0, 5), 4, 1.0, 6);
    const Iteration T = 10000;
    const RunTrace trace = run_heterogeneous(fam, NoiseModel{0.0}, constant_workers({1.0, 1.0, 1.0, 1.0}), 2,
                                             ConstantStepsize{0.01}, Vector::Zero(3), FixedIterations{T}, 21);
    for (Iteration c : trace.ledger.samples_per_client) CHECK(oracle::within_binomial(c, T, 0.25, 3.0));
}

TEST_CASE("run_heterogeneous: equal speeds, zeta > 0, sigma = 0 settles in a stationary region") {
    const auto fam = make_heterogeneous(make_quadratic(4, 1.0, 2.0, 2), 2, 1.0, 3);
    const Vector x0 = 5.0 * Vector::Ones(4);
    const RunTrace trace = run_heterogeneous(fam, NoiseModel{0.0}, constant_workers({1.0, 1.0}), 2,
                                             ConstantStepsize{0.02}, x0, FixedIterations{5000}, 4);
    CHECK(trace.status == RunStatus::kCompleted);
    const double start = fam->gradient(x0).norm();
    CHECK(trace.final_grad_norm < start / 10);
    // Each step moves by eta * ||grad f_i||, so the floor is on the order of eta * L * zeta.
    CHECK(trace.final_grad_norm <= 10 * 0.02 * fam->smoothness() * std::sqrt(fam->zeta_sq()) + 1e-9);
}

TEST_CASE("run_homogeneous rejects client sampling; run_heterogeneous validates sizes") {
    auto cfg = base_config({1.0}, 5);
    cfg.scheduler = UniformClientSampling{1, true};
    CHECK_THROWS_AS(run_homogeneous(cfg), InvalidConfigError);
    const auto fam = make_heterogeneous(make_quadratic(2, 1.0, 2.0, 5), 3, 1.0, 6);
    CHECK_THROWS_AS(run_heterogeneous(fam, NoiseModel{}, constant_workers({1.0}), 1, ConstantStepsize{0.1},
                                      Vector::Zero(2), FixedIterations{3}, 0),
                    InvalidConfigError);
}

TEST_CASE("invalid configurations") {
    SUBCASE("empty fleet") {
        auto cfg = base_config({1.0}, 5);
        cfg.workers.clear();
        CHECK_THROWS_AS(Simulator{cfg}, InvalidConfigError);
    }
    SUBCASE("custom schedule with empty initial set") {
        auto cfg = base_config({1.0, 1.0}, 5);
        cfg.scheduler = table_schedule({}, {});
        CHECK_THROWS_AS(Simulator{cfg}, InvalidConfigError);
    }
    SUBCASE("duplicate initial workers") {
        auto cfg = base_config({1.0, 1.0}, 5);
        cfg.scheduler = MaxConcurrency{{0, 0}};
        CHECK_THROWS_AS(Simulator{cfg}, InvalidConfigError);
    }
    SUBCASE("dimension mismatch") {
        auto cfg = base_config({1.0}, 5);
        cfg.x0 = Vector::Zero(3);
        CHECK_THROWS_AS(Simulator{cfg}, InvalidConfigError);
    }
    SUBCASE("non-positive compute time") {
        auto cfg = base_config({0.0}, 5);
        CHECK_THROWS_AS(Simulator{cfg}, InvalidConfigError);
    }
}

TEST_CASE("a schedule that starves every worker deadlocks") {
    auto cfg = base_config({1.0, 1.0}, 10);
    cfg.scheduler = table_schedule({0}, {});
    Simulator sim(cfg);
    sim.advance();
    CHECK_THROWS_AS(sim.advance(), SimulationDeadlock);
}

TEST_CASE("custom schedule may not pick busy workers") {
    auto cfg = base_config({1.0, 5.0}, 10);
    cfg.scheduler = table_schedule({0, 1}, {{0, {1}}});
    Simulator sim(cfg);
    CHECK_THROWS_AS(sim.advance(), InvalidConfigError);
}

TEST_CASE("stop rules") {
    SUBCASE("gradient-norm threshold converges") {
        auto cfg = base_config({1.0}, 0);
        cfg.stepsize = ConstantStepsize{0.2};
        cfg.stop = GradNormBelow{1e-8, 10000};
        const RunTrace trace = simulate(cfg);
        CHECK(trace.status == RunStatus::kConverged);
        CHECK(trace.final_grad_norm <= 1e-8);
        CHECK(trace.records.back().grad_norm > 1e-8);
    }
    SUBCASE("iteration cap reached is flagged not-converged") {
        auto cfg = base_config({1.0}, 0);
        cfg.stepsize = ConstantStepsize{1e-6};
        cfg.stop = GradNormBelow{1e-8, 100};
        const RunTrace trace = simulate(cfg);
        CHECK(trace.status == RunStatus::kNotConverged);
        CHECK(trace.iterations() == 100);
    }
    SUBCASE("last-k average") {
        auto cfg = base_config({1.0}, 0);
        cfg.stepsize = ConstantStepsize{0.2};
        cfg.stop = LastKAverageBelow{1e-8, 30, 10000};
        const RunTrace trace = simulate(cfg);
        CHECK(trace.status == RunStatus::kConverged);
        const auto series = trace.grad_norm_series();
        double sum = 0.0;
        for (std::size_t i = series.size() - 30; i < series.size(); ++i) sum += series[i];
        CHECK(sum / 30 <= 1e-8);
        CHECK(trace.tail_grad_norms.back() == trace.final_grad_norm);
    }
    SUBCASE("divergence is detected") {
        auto cfg = base_config({1.0}, 100000);
        cfg.stepsize = ConstantStepsize{5.0};
        const RunTrace trace = simulate(cfg);
        CHECK(trace.status == RunStatus::kDiverged);
        CHECK(trace.iterations() < 100000);
    }
}

TEST_CASE("deterministic convergence with the theoretical stepsize") {
    for (int c : {1, 2, 4}) {
        auto cfg = base_config(std::vector<double>(static_cast<std::size_t>(c), 1.0), 0);
        cfg.objective = make_quadratic(10, 1.0, 2.0, 3);
        cfg.x0 = Vector::Zero(10);
        // Equal speeds give tau_max = tau_C.
        cfg.stepsize = TheoreticalStepsize{cfg.objective->smoothness(), c, c, 0.0, 0.0, 0};
        cfg.stop = GradNormBelow{1e-10, 100000};
        const RunTrace trace = simulate(cfg);
        CHECK(trace.status == RunStatus::kConverged);
        CHECK(tau_max(trace.ledger) <= c);
        // Eventually monotone: the last quarter of the trace never increases by more than
        // the delay-induced ripple of one full round.
        const auto s = trace.grad_norm_series();
        std::size_t increases = 0;
        for (std::size_t i = s.size() * 3 / 4 + 1; i < s.size(); ++i) increases += s[i] > s[i - static_cast<std::size_t>(c)];
        CHECK(increases == 0);
    }
}

TEST_CASE("engine cross-check: wall time per gradient") {
    const std::vector<double> deltas{1.0, 2.0, 4.0, 8.0};
    const double dbar = (1.0 + 2.0 + 4.0 + 8.0) / 4.0;
    SUBCASE("client sampling: time per tau_C gradients tends to the mean compute time") {
        const auto fam = make_heterogeneous(make_quadratic(2, 1.0, 2.0, 1), 4, 0.0, 2);
        const Iteration tau_c = 3;
        SimulationConfig cfg;
        cfg.objective = fam;
        cfg.workers = constant_workers(deltas);
        cfg.scheduler = UniformClientSampling{tau_c, false};
        cfg.x0 = Vector::Zero(2);
        cfg.stepsize = ConstantStepsize{0.0};
        cfg.stop = FixedIterations{200000};
        cfg.keep_records = false;
        const RunTrace trace = simulate(cfg);
        const double per_batch = trace.wall_time / (200000.0 / tau_c);
        CHECK(per_batch == doctest::Approx(dbar).epsilon(0.02));
    }
    SUBCASE("sampled mini-batch: time per batch tends to the expected maximum") {
        const std::int64_t batch = 3;
        SimulationConfig cfg;
        cfg.objective = make_quadratic(2, 1.0, 2.0, 1);
        cfg.workers = constant_workers(deltas);
        cfg.scheduler = SampledMiniBatch{batch};
        cfg.x0 = Vector::Zero(2);
        cfg.stepsize = ConstantStepsize{0.0};
        cfg.stop = FixedIterations{batch * 50000};
        cfg.keep_records = false;
        const RunTrace trace = simulate(cfg);
        const double expected = oracle::brute_force_expected_max(deltas, static_cast<int>(batch));
        CHECK(trace.wall_time / 50000.0 == doctest::Approx(expected).epsilon(0.02));
    }
}
