#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "asyncsgd/types.hpp"

namespace asyncsgd {

/// SplitMix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for the named stream `name` (optionally indexed, e.g. per worker) under `master`.
/// Streams with different (name, index) pairs are independent for practical purposes.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
    return mix64(mix64(master ^ fnv1a(name)) + mix64(index + 0x632be59bd9b4e019ULL));
}

namespace streams {
inline constexpr std::string_view kObjective = "objective-gen";
inline constexpr std::string_view kNoise = "noise-per-worker";
inline constexpr std::string_view kClientSampling = "client-sampling";
inline constexpr std::string_view kDelayModel = "delay-model";
inline constexpr std::string_view kInitialPoint = "initial-point";
}  // namespace streams

/// A single reproducible random stream. Owns its engine and distribution state, so two
/// streams constructed from the same seed produce identical sequences.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }

    /// Uniform on [0, 1).
    double uniform() { return std::generate_canonical<double, 53>(engine_); }

    /// Uniform integer in [0, n).
    std::int64_t uniform_index(std::int64_t n) {
        std::uniform_int_distribution<std::int64_t> dist(0, n - 1);
        return dist(engine_);
    }

    std::uint64_t next_seed() { return engine_(); }

    Vector normal_vector(Eigen::Index n) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace asyncsgd
