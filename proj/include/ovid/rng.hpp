#pragma once

// Portable sampling helpers. std::mt19937_64 output is fixed by the standard,
// but the std distributions are not, so everything that must reproduce
// bit-for-bit across toolchains goes through these.

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace ovid {

using Rng = std::mt19937_64;

/// Uniform integer in [0, n) by rejection sampling. n must be > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t draw = rng();
    while (draw >= limit) {
        draw = rng();
    }
    return draw % n;
}

/// Uniform double in [0, 1) with 53 bits of precision.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

/// Derives an independent child seed; splitmix64 finalizer.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace ovid
