#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>

#include "atlas/hash.hpp"

namespace atlas {

/// Portable random stream. The standard distributions are implementation
/// defined, so every draw here is built directly from mt19937_64 output,
/// which is fully specified. Results are bit-identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    static Rng stream(std::uint64_t seed, std::uint64_t index) { return Rng(derive_seed(seed, index)); }
    static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
        return Rng(derive_seed(seed, a, b));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::size_t uniform_index(std::size_t n) {
        if (n <= 1) {
            return 0;
        }
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (hi <= lo) {
            return lo;
        }
        return lo + static_cast<std::int64_t>(uniform_index(static_cast<std::size_t>(hi - lo) + 1));
    }

    bool bernoulli(double p) {
        if (p <= 0.0) {
            return false;
        }
        if (p >= 1.0) {
            return true;
        }
        return uniform() < p;
    }

    /// Categorical draw over nonnegative weights (need not be normalized).
    /// Zero-weight entries are never returned unless every weight is zero,
    /// in which case the draw is uniform.
    std::size_t categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) {
            total += w;
        }
        if (!(total > 0.0)) {
            return uniform_index(weights.size());
        }
        const double target = uniform() * total;
        double acc = 0.0;
        std::size_t last_positive = 0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) {
                continue;
            }
            acc += weights[i];
            last_positive = i;
            if (target < acc) {
                return i;
            }
        }
        return last_positive;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace atlas
