#include <doctest.h>

#include <cmath>
#include <numeric>

#include "asyncsgd/rng.hpp"
#include "asyncsgd/speedup.hpp"
#include "oracles.hpp"

using namespace asyncsgd;

namespace {

std::vector<double> reference_fleet() {
    std::vector<double> d(900, 10.0);
    d.insert(d.end(), 100, 60.0);
    return d;
}

}  // namespace

TEST_CASE("two workers, times 1 and 3") {
    const auto in = make_speedup_input({3.0, 1.0}, 2);
    CHECK(in.deltas == std::vector<double>{1.0, 3.0});
    CHECK(async_time(in) == 2.0);
    const auto a = minibatch_weights(2, 2);
    CHECK(a[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(a[1] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(minibatch_time(in) == doctest::Approx(2.5).epsilon(1e-15));
    const auto ex = minibatch_time_oracle(in, OracleMethod::kExhaustive);
    CHECK(ex.estimate == 2.5);
    CHECK(ex.method == OracleMethod::kExhaustive);
    CHECK_FALSE(ex.fell_back);
}

TEST_CASE("reference example: 900 x 10s and 100 x 60s, tau_C = 10") {
    const auto in = make_speedup_input(reference_fleet(), 10);
    CHECK(async_time(in) == 15.0);
    const double mb = minibatch_time(in);
    CHECK(mb >= 42.4);
    CHECK(mb <= 42.7);
    CHECK(mb == doctest::Approx(10.0 + 50.0 * (1.0 - std::pow(0.9, 10))).epsilon(1e-12));
    CHECK(speedup_ratio(in) == doctest::Approx(mb / 15.0));
    CHECK(speedup_ratio(in) == doctest::Approx(2.84).epsilon(0.005));
    // 1000^10 tuples: exhaustive falls back to sampling.
    const auto o = minibatch_time_oracle(in, OracleMethod::kExhaustive, 100000, 3);
    CHECK(o.fell_back);
    CHECK(o.method == OracleMethod::kMonteCarlo);
    CHECK(std::abs(o.estimate - mb) <= 3.0 * o.stderr_);
}

TEST_CASE("equal times give ratio one; tau_C = 1 reduces to the mean") {
    CHECK(speedup_ratio(make_speedup_input(std::vector<double>(7, 4.0), 5)) == doctest::Approx(1.0).epsilon(1e-14));
    Rng rng(2);
    for (int k = 0; k < 50; ++k) {
        std::vector<double> d;
        const int n = 1 + static_cast<int>(rng.uniform() * 30);
        for (int i = 0; i < n; ++i) d.push_back(0.1 + 10.0 * rng.uniform());
        const auto in = make_speedup_input(d, 1);
        CHECK(minibatch_time(in) == doctest::Approx(async_time(in)).epsilon(1e-12));
        CHECK(minibatch_time_oracle(in, OracleMethod::kExhaustive).estimate ==
              doctest::Approx(async_time(in)).epsilon(1e-12));
    }
}

TEST_CASE("weights: non-negative, sum to one, nondecreasing; no overflow") {
    for (std::size_t n : {1UL, 2UL, 10UL, 1000UL, 100000UL}) {
        for (std::int64_t c : {1L, 2L, 10L, 100L, 5000L}) {
            const auto a = minibatch_weights(n, c);
            REQUIRE(a.size() == n);
            long double sum = 0.0L;
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(a[i] >= 0.0);
                CHECK(std::isfinite(a[i]));
                if (i > 0) CHECK(a[i] >= a[i - 1]);
                sum += a[i];
            }
            CHECK(std::abs(static_cast<double>(sum) - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("random inputs: Delta_bar <= Delta_tilde, nondecreasing in tau_C") {
    Rng rng(5);
    for (int k = 0; k < 500; ++k) {
        std::vector<double> d;
        const int n = 1 + static_cast<int>(rng.uniform() * 50);
        for (int i = 0; i < n; ++i) d.push_back(std::exp(3.0 * rng.normal()));
        double prev = 0.0;
        for (std::int64_t c = 1; c <= 20; ++c) {
            const auto in = make_speedup_input(d, c);
            const double mb = minibatch_time(in);
            CHECK(async_time(in) <= mb * (1 + 1e-12));
            CHECK(speedup_ratio(in) >= 1.0 - 1e-12);
            CHECK(mb >= prev * (1 - 1e-12));
            prev = mb;
        }
    }
}

TEST_CASE("closed form equals exhaustive enumeration") {
    Rng rng(7);
    for (int k = 0; k < 100; ++k) {
        const int n = 1 + static_cast<int>(rng.uniform() * 8);
        const int c = 1 + static_cast<int>(rng.uniform() * 5);
        std::vector<double> d;
        for (int i = 0; i < n; ++i) d.push_back(0.5 + std::floor(10.0 * rng.uniform()));
        const auto in = make_speedup_input(d, c);
        const double closed = minibatch_time(in);
        const auto ex = minibatch_time_oracle(in, OracleMethod::kExhaustive);
        CHECK_FALSE(ex.fell_back);
        CHECK(std::abs(ex.estimate - closed) <= 1e-12 * closed);
        CHECK(std::abs(oracle::brute_force_expected_max(in.deltas, c) - closed) <= 1e-12 * closed);
    }
}

TEST_CASE("closed form is within 3 standard errors of Monte-Carlo") {
    Rng rng(11);
    int inside = 0;
    const int trials = 30;
    for (int k = 0; k < trials; ++k) {
        std::vector<double> d;
        const int n = 2 + static_cast<int>(rng.uniform() * 100);
        for (int i = 0; i < n; ++i) d.push_back(1.0 + 20.0 * rng.uniform());
        const auto in = make_speedup_input(d, 1 + static_cast<std::int64_t>(rng.uniform() * 20));
        const auto mc = minibatch_time_oracle(in, OracleMethod::kMonteCarlo, 100000, static_cast<std::uint64_t>(k));
        CHECK(mc.samples == 100000);
        CHECK(mc.stderr_ > 0.0);
        inside += std::abs(mc.estimate - minibatch_time(in)) <= 3.0 * mc.stderr_;
    }
    // Each trial fails with probability 0.27%.
    CHECK(inside >= trials - 1);
}

TEST_CASE("Monte-Carlo oracle is deterministic in its seed") {
    const auto in = make_speedup_input({1.0, 2.0, 5.0, 9.0}, 3);
    CHECK(minibatch_time_oracle(in, OracleMethod::kMonteCarlo, 5000, 1).estimate ==
          minibatch_time_oracle(in, OracleMethod::kMonteCarlo, 5000, 1).estimate);
}

TEST_CASE("parse_deltas") {
    CHECK(parse_deltas("1,3,5") == std::vector<double>{1.0, 3.0, 5.0});
    const auto fleet = parse_deltas("900x10,100x60");
    CHECK(fleet.size() == 1000);
    CHECK(std::accumulate(fleet.begin(), fleet.end(), 0.0) == 15000.0);
    CHECK(parse_deltas("2x1.5") == std::vector<double>{1.5, 1.5});
    CHECK_THROWS_AS(parse_deltas(""), InvalidSpecError);
    CHECK_THROWS_AS(parse_deltas("a,b"), InvalidSpecError);
}

TEST_CASE("invalid inputs") {
    CHECK_THROWS_AS(make_speedup_input({}, 1), InvalidSpecError);
    CHECK_THROWS_AS(make_speedup_input({1.0, 0.0}, 1), InvalidSpecError);
    CHECK_THROWS_AS(make_speedup_input({1.0, -2.0}, 1), InvalidSpecError);
    CHECK_THROWS_AS(make_speedup_input({1.0, NAN}, 1), InvalidSpecError);
    CHECK_THROWS_AS(make_speedup_input({1.0}, 0), InvalidSpecError);
}

TEST_CASE("speedup report") {
    const auto in = make_speedup_input({1.0, 3.0}, 2);
    const auto j = speedup_report(in, minibatch_time_oracle(in, OracleMethod::kExhaustive));
    CHECK(j.dump().find("2.5") != std::string::npos);
}
