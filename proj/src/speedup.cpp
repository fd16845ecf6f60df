#include "asyncsgd/speedup.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "asyncsgd/rng.hpp"

namespace asyncsgd {

SpeedupInput make_speedup_input(std::vector<double> deltas, std::int64_t tau_c) {
    if (deltas.empty()) throw InvalidSpecError("speedup: need at least one compute time");
    if (tau_c < 1) throw InvalidSpecError("speedup: tau_C must be >= 1");
    for (double d : deltas) {
        if (!(d > 0.0) || !std::isfinite(d)) throw InvalidSpecError("speedup: compute times must be finite and > 0");
    }
    std::sort(deltas.begin(), deltas.end());
    return SpeedupInput{std::move(deltas), tau_c};
}

std::vector<double> parse_deltas(const std::string& text) {
    auto number = [](const std::string& s, auto parse) {
        std::size_t used = 0;
        const auto v = parse(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    };
    auto to_double = [](const std::string& s, std::size_t* used) { return std::stod(s, used); };
    auto to_long = [](const std::string& s, std::size_t* used) { return std::stol(s, used); };
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            const auto x = item.find('x');
            if (x == std::string::npos) {
                out.push_back(number(item, to_double));
            } else {
                const long count = number(item.substr(0, x), to_long);
                const double value = number(item.substr(x + 1), to_double);
                if (count < 0) throw InvalidSpecError("negative count in '" + item + "'");
                out.insert(out.end(), static_cast<std::size_t>(count), value);
            }
        } catch (const std::logic_error&) {
            throw InvalidSpecError("cannot parse compute-time entry '" + item + "'");
        }
    }
    if (out.empty()) throw InvalidSpecError("no compute times given");
    return out;
}

double async_time(const SpeedupInput& in) {
    double sum = 0.0;
    for (double d : in.deltas) sum += d;
    return sum / static_cast<double>(in.deltas.size());
}

std::vector<double> minibatch_weights(std::size_t n, std::int64_t tau_c) {
    std::vector<double> alpha(n);
    if (tau_c == 1) {
        std::fill(alpha.begin(), alpha.end(), 1.0 / static_cast<double>(n));
        return alpha;
    }
    const double c = static_cast<double>(tau_c);
    const double log_n = std::log(static_cast<double>(n));
    for (std::size_t i = 1; i <= n; ++i) {
        // (i/n)^C * (1 - ((i-1)/i)^C), both factors in log space.
        const double di = static_cast<double>(i);
        const double head = std::exp(c * (std::log(di) - log_n));
        const double tail = i == 1 ? 1.0 : -std::expm1(c * std::log1p(-1.0 / di));
        alpha[i - 1] = head * tail;
    }
    return alpha;
}

double minibatch_time(const SpeedupInput& in) {
    const auto alpha = minibatch_weights(in.deltas.size(), in.tau_c);
    double sum = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) sum += alpha[i] * in.deltas[i];
    return sum;
}

double speedup_ratio(const SpeedupInput& in) {
    return minibatch_time(in) / async_time(in);
}

OracleEstimate minibatch_time_oracle(const SpeedupInput& in, OracleMethod method, std::int64_t samples,
                                     std::uint64_t seed) {
    const auto n = static_cast<std::int64_t>(in.deltas.size());
    bool fell_back = false;
    if (method == OracleMethod::kExhaustive) {
        // n^C <= budget, checked without overflow.
        std::int64_t tuples = 1;
        bool within = true;
        for (std::int64_t k = 0; k < in.tau_c && within; ++k) {
            if (tuples > kExhaustiveBudget / n) within = false;
            tuples *= n;
        }
        within = within && tuples <= kExhaustiveBudget;
        if (within) {
            std::vector<std::int64_t> idx(static_cast<std::size_t>(in.tau_c), 0);
            double sum = 0.0;
            for (std::int64_t count = 0; count < tuples; ++count) {
                double mx = 0.0;
                for (auto i : idx) mx = std::max(mx, in.deltas[static_cast<std::size_t>(i)]);
                sum += mx;
                // Odometer increment.
                for (std::size_t pos = 0; pos < idx.size(); ++pos) {
                    if (++idx[pos] < n) break;
                    idx[pos] = 0;
                }
            }
            return OracleEstimate{sum / static_cast<double>(tuples), 0.0, OracleMethod::kExhaustive, false, tuples};
        }
        fell_back = true;
    }
    if (samples < 2) throw InvalidSpecError("Monte-Carlo oracle needs at least two samples");
    Rng rng(derive_seed(seed, "speedup-oracle"));
    double mean = 0.0;
    double m2 = 0.0;
    for (std::int64_t s = 0; s < samples; ++s) {
        double mx = 0.0;
        for (std::int64_t k = 0; k < in.tau_c; ++k) {
            mx = std::max(mx, in.deltas[static_cast<std::size_t>(rng.uniform_index(n))]);
        }
        const double delta = mx - mean;
        mean += delta / static_cast<double>(s + 1);
        m2 += delta * (mx - mean);
    }
    const double variance = m2 / static_cast<double>(samples - 1);
    // When one outcome dominates, every sample can coincide and the sample variance is 0.
    // The error is then bounded below by the resolution of N draws of a variable in [min, max].
    const double resolution = (in.deltas.back() - in.deltas.front()) / static_cast<double>(samples);
    const double stderr_ = std::max(std::sqrt(variance / static_cast<double>(samples)), resolution);
    return OracleEstimate{mean, stderr_, OracleMethod::kMonteCarlo, fell_back, samples};
}

nlohmann::json speedup_report(const SpeedupInput& in, const OracleEstimate& oracle) {
    const auto [lo, hi] = std::minmax_element(in.deltas.begin(), in.deltas.end());
    const double bar = async_time(in);
    const double tilde = minibatch_time(in);
    return {{"deltas", {{"n", in.deltas.size()}, {"min", *lo}, {"max", *hi}, {"mean", bar}}},
            {"tau_c", in.tau_c},
            {"async_time", bar},
            {"minibatch_time", tilde},
            {"ratio", tilde / bar},
            {"oracle",
             {{"method", oracle.method == OracleMethod::kExhaustive ? "exhaustive" : "monte_carlo"},
              {"estimate", oracle.estimate},
              {"stderr", oracle.stderr_},
              {"samples", oracle.samples},
              {"fell_back", oracle.fell_back}}}};
}

}  // namespace asyncsgd
