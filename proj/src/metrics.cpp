#include "asyncsgd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace asyncsgd {
namespace {

// Integer accumulator that refuses to wrap.
class CheckedSum {
public:
    CheckedSum& operator+=(std::int64_t v) {
        if (__builtin_add_overflow(total_, v, &total_)) throw NumericDomainError("delay sum overflow");
        return *this;
    }
    std::int64_t value() const { return total_; }

private:
    std::int64_t total_ = 0;
};

Iteration active_count(const DelayLedger& ledger) {
    return static_cast<Iteration>(ledger.in_flight.size());
}

}  // namespace

std::string to_string(InFlightConvention c) {
    return c == InFlightConvention::kExcludeNextToFinish ? "exclude_next_to_finish" : "include_all";
}

DelayAverage tau_avg(const DelayLedger& ledger) {
    const bool has_next = std::any_of(ledger.in_flight.begin(), ledger.in_flight.end(),
                                      [](const PendingJob& j) { return j.next_to_finish; });
    return tau_avg(ledger, has_next ? InFlightConvention::kExcludeNextToFinish : InFlightConvention::kIncludeAll);
}

DelayAverage tau_avg(const DelayLedger& ledger, InFlightConvention convention) {
    if (ledger.iterations < 1) throw InvalidSpecError("tau_avg needs at least one applied gradient");
    CheckedSum num;
    for (const auto& a : ledger.applied) num += a.delay;
    Iteration counted = 0;
    for (const auto& j : ledger.in_flight) {
        if (convention == InFlightConvention::kExcludeNextToFinish && j.next_to_finish) continue;
        num += ledger.pending_delay(j);
        ++counted;
    }
    const std::int64_t den = ledger.iterations + counted;
    return DelayAverage{static_cast<double>(num.value()) / static_cast<double>(den), num.value(), den, convention};
}

Iteration tau_max(const DelayLedger& ledger) {
    Iteration best = 0;
    for (const auto& a : ledger.applied) best = std::max(best, a.delay);
    for (const auto& j : ledger.in_flight) {
        if (j.next_to_finish) continue;
        best = std::max(best, ledger.pending_delay(j));
    }
    return best;
}

void Remark5Result::require() const {
    if (!pass) throw IdentityViolation(lhs, rhs);
}

Remark5Result remark5_check(const DelayLedger& ledger) {
    CheckedSum lhs;
    for (const auto& a : ledger.applied) lhs += a.delay + 1;
    for (const auto& j : ledger.in_flight) lhs += ledger.pending_delay(j) + 1;
    const auto rhs = concurrency_sum(ledger).numerator;
    return Remark5Result{lhs.value(), rhs, lhs.value() == rhs};
}

Fraction concurrency_sum(const DelayLedger& ledger) {
    CheckedSum sum;
    for (Iteration c : ledger.concurrency_log) sum += c;
    return Fraction{sum.value(), static_cast<std::int64_t>(ledger.concurrency_log.size())};
}

double average_concurrency(const DelayLedger& ledger) {
    const auto f = concurrency_sum(ledger);
    return f.denominator == 0 ? 0.0 : static_cast<double>(f.numerator) / static_cast<double>(f.denominator);
}

Iteration max_concurrency(const DelayLedger& ledger) {
    Iteration best = 0;
    for (Iteration c : ledger.concurrency_log) best = std::max(best, c);
    return best;
}

Fraction tau_avg_inclusive(const DelayLedger& ledger) {
    const auto r = remark5_check(ledger);
    return Fraction{r.lhs, ledger.iterations + active_count(ledger) - 1};
}

std::optional<double> tau_avg_per_client(const DelayLedger& ledger, ClientId client) {
    if (client < 0 || client >= ledger.num_clients()) return std::nullopt;
    const Iteration samples = ledger.samples_per_client[static_cast<std::size_t>(client)];
    if (samples == 0) return std::nullopt;
    CheckedSum num;
    for (const auto& a : ledger.applied) {
        if (a.client == client) num += a.delay;
    }
    for (const auto& j : ledger.in_flight) {
        if (j.client == client) num += ledger.pending_delay(j);
    }
    return static_cast<double>(num.value()) / static_cast<double>(samples);
}

ErrorEstimate error_estimate_last_k(const std::vector<double>& grad_norms, int k) {
    if (k < 1) throw InvalidSpecError("error estimate window must be >= 1");
    if (grad_norms.empty()) throw InvalidSpecError("error estimate needs a non-empty trace");
    const bool truncated = static_cast<std::size_t>(k) > grad_norms.size();
    const std::size_t window = truncated ? grad_norms.size() : static_cast<std::size_t>(k);
    double sum = 0.0;
    for (std::size_t i = grad_norms.size() - window; i < grad_norms.size(); ++i) sum += grad_norms[i];
    return ErrorEstimate{sum / static_cast<double>(window), static_cast<int>(window), truncated};
}

ErrorEstimate error_estimate_last_k(const RunTrace& trace, int k) {
    if (trace.records.empty() && trace.iterations() > 0) {
        // Records were not kept; the trailing window is enough unless k exceeds it.
        if (k > static_cast<int>(trace.tail_grad_norms.size()) &&
            static_cast<Iteration>(trace.tail_grad_norms.size()) < trace.iterations() + 1) {
            throw InvalidConfigError("error estimate: window exceeds the kept tail of the trace");
        }
        return error_estimate_last_k(trace.tail_grad_norms, k);
    }
    return error_estimate_last_k(trace.grad_norm_series(), k);
}

std::optional<double> weighted_grad_average(const RunTrace& trace, GradWeights weights) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& r : trace.records) {
        double w = 1.0;
        if (weights == GradWeights::kAssigned) w = static_cast<double>(r.assigned);
        if (weights == GradWeights::kStepsize) w = r.eta;
        num += w * r.grad_norm * r.grad_norm;
        den += w;
    }
    if (den == 0.0) return std::nullopt;
    return num / den;
}

nlohmann::json metrics_summary(const RunTrace& trace) {
    const auto& ledger = trace.ledger;
    nlohmann::json out;
    out["iterations"] = ledger.iterations;
    out["status"] = to_string(trace.status);
    out["sim_wall_time"] = trace.wall_time;
    out["final_error"] = trace.final_grad_norm;
    out["final_value"] = trace.final_value;
    if (ledger.iterations >= 1) {
        const auto avg = tau_avg(ledger);
        out["tau_avg"] = avg.value;
        out["tau_avg_convention"] = to_string(avg.convention);
        out["tau_avg_denominator"] = avg.denominator;
    } else {
        out["tau_avg"] = nullptr;
    }
    out["tau_max"] = tau_max(ledger);
    nlohmann::json per_client = nlohmann::json::array();
    for (int c = 0; c < ledger.num_clients(); ++c) {
        const auto v = tau_avg_per_client(ledger, c);
        per_client.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    }
    out["tau_avg_per_client"] = std::move(per_client);
    out["samples_per_client"] = ledger.samples_per_client;
    out["avg_concurrency"] = average_concurrency(ledger);
    out["max_concurrency"] = max_concurrency(ledger);
    const auto r5 = remark5_check(ledger);
    out["remark5"] = {{"lhs", r5.lhs}, {"rhs", r5.rhs}, {"pass", r5.pass}};
    const auto est = error_estimate_last_k(trace, kTailWindow);
    out["error_last30"] = est.value;
    out["error_last30_truncated"] = est.truncated;
    return out;
}

}  // namespace asyncsgd
