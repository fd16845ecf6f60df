#pragma once

// Reference implementations used only by the tests. Each one computes its answer by a
// different route than the library code it checks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "asyncsgd/engine.hpp"

namespace oracle {

using asyncsgd::Iteration;
using asyncsgd::Matrix;
using asyncsgd::Vector;

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double power_iteration(const Matrix& m, int iterations = 5000) {
    Vector v = Vector::Ones(m.rows()) / std::sqrt(static_cast<double>(m.rows()));
    double lambda = 0.0;
    for (int i = 0; i < iterations; ++i) {
        const Vector w = m * v;
        lambda = v.dot(w);
        v = w / w.norm();
    }
    return lambda;
}

/// Central differences with step h.
inline Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5) {
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vector xp = x;
        Vector xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

/// Mean of max(deltas[i_1..i_c]) over all n^c tuples, by recursion.
inline double brute_force_expected_max(const std::vector<double>& deltas, int c) {
    std::function<double(int, double)> rec = [&](int depth, double current) -> double {
        if (depth == c) return current;
        double sum = 0.0;
        for (double d : deltas) sum += rec(depth + 1, std::max(current, d));
        return sum / static_cast<double>(deltas.size());
    };
    return rec(0, 0.0);
}

/// Plain mini-batch SGD: every worker evaluates at the batch-start point, then the gradients
/// are applied one by one, fastest worker first (ties by id). Data seeds come from the same
/// per-worker streams the simulator uses, one seed per assignment.
inline std::vector<Vector> minibatch_sgd(const asyncsgd::Objective& obj, const asyncsgd::NoiseModel& noise,
                                         const std::vector<double>& deltas, double eta, const Vector& x0,
                                         std::uint64_t seed, Iteration iterations) {
    const std::size_t n = deltas.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return deltas[a] < deltas[b]; });
    std::vector<asyncsgd::Rng> streams;
    for (std::size_t w = 0; w < n; ++w) {
        streams.emplace_back(asyncsgd::derive_seed(seed, asyncsgd::streams::kNoise, w));
    }
    std::vector<Vector> xs{x0};
    Vector x = x0;
    while (static_cast<Iteration>(xs.size()) <= iterations) {
        const Vector start = x;
        std::vector<Vector> grads(n);
        for (std::size_t w = 0; w < n; ++w) {
            asyncsgd::Rng data(streams[w].next_seed());
            grads[w] = obj.gradient(start) + noise.sample(data, start.size());
        }
        for (std::size_t w : order) {
            if (static_cast<Iteration>(xs.size()) > iterations) break;
            x = x - eta * grads[w];
            xs.push_back(x);
        }
    }
    return xs;
}

/// |C_t| for t = 0..T rebuilt from the job lifetimes in the ledger: a job assigned at s and
/// applied at a is in flight for t = s..a, one still pending at T for t = s..T.
inline std::vector<Iteration> concurrency_from_lifetimes(const asyncsgd::DelayLedger& ledger) {
    const Iteration T = ledger.iterations;
    std::vector<Iteration> c(static_cast<std::size_t>(T + 1), 0);
    for (std::size_t a = 0; a < ledger.applied.size(); ++a) {
        for (Iteration t = ledger.applied[a].start; t <= static_cast<Iteration>(a); ++t) ++c[static_cast<std::size_t>(t)];
    }
    for (const auto& j : ledger.in_flight) {
        for (Iteration t = j.start; t <= T; ++t) ++c[static_cast<std::size_t>(t)];
    }
    return c;
}

/// 4-sigma band of a Binomial(T, p) count.
inline bool within_binomial(std::int64_t count, std::int64_t trials, double p, double sigmas) {
    const double mean = static_cast<double>(trials) * p;
    const double sd = std::sqrt(static_cast<double>(trials) * p * (1.0 - p));
    return std::abs(static_cast<double>(count) - mean) <= sigmas * sd;
}

}  // namespace oracle
