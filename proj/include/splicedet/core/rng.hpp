#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace splicedet::core {

/// Deterministic random source. std::mt19937_64 has a fully specified
/// algorithm, and all distributions are implemented here by hand, so a
/// given seed yields the same stream on every platform and build.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::int64_t randint(std::int64_t n) {
        return static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(n));
    }

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t randint(std::int64_t lo, std::int64_t hi) { return lo + randint(hi - lo + 1); }

    /// Standard normal via Box-Muller, one cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Fisher-Yates shuffle.
    template <typename V>
    void shuffle(V& v) {
        for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
            std::int64_t j = randint(i + 1);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    /// Derive an independent child stream (used to decouple samplers).
    Rng fork() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ULL); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace splicedet::core
