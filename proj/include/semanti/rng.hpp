// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "semanti/error.hpp"

namespace semanti {

/// Deterministic 64-bit random stream (splitmix64).
///
/// Every stochastic choice in the library draws from a stream derived by
/// hashing (seed, purpose, epoch, index), so results are reproducible and
/// independent of evaluation order: two call sites never share a stream.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t state) : state_(state) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [0, bound). Rejection sampling keeps it unbiased.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) throw InvalidArgument("next_below: bound must be positive");
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    /// Standard normal via Box-Muller (one value per call; the partner
    /// draw is discarded to keep the stream position predictable).
    double next_gauss() {
        double u1 = next_unit();
        double u2 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Normal truncated to two standard deviations, rescaled by sigma.
    double next_trunc_normal(double sigma) {
        for (;;) {
            const double g = next_gauss();
            if (g > -2.0 && g < 2.0) return g * sigma;
        }
    }

private:
    std::uint64_t state_;
};

namespace detail {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = kFnvOffset;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    std::uint64_t z = h + 0x9E3779B97F4A7C15ull + v;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Stream derivation: hash of (global seed, purpose tag, epoch, index).
inline RandomStream derive_stream(std::uint64_t seed, std::string_view purpose,
                                  std::uint64_t epoch = 0, std::uint64_t index = 0) {
    std::uint64_t h = detail::mix(detail::fnv1a(purpose), seed);
    h = detail::mix(h, epoch);
    h = detail::mix(h, index);
    return RandomStream(h);
}

}  // namespace semanti
