#pragma once

#include "kernelguard/types.hpp"

#include <cstdint>
#include <random>

namespace kernelguard {

/// splitmix64 finalizer; turns (seed, stream id) into decorrelated seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Named streams so that adding a consumer never shifts another's draws.
enum class Stream : std::uint64_t {
    plant_noise = 1,
    initial_state = 2,
    gain_bank = 3,
    schedule = 4,
    reference = 5,
    q_filter = 6,
};

inline std::uint64_t derive_seed(std::uint64_t seed, Stream s) {
    return derive_seed(seed, static_cast<std::uint64_t>(s));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    Vector normal(Eigen::Index n) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal_(engine_);
        return v;
    }
    double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace kernelguard
