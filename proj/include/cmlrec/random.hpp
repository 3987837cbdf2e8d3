#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace cmlrec {

using Rng = std::mt19937_64;

/// Derives an independent, reproducible seed for a named stage from the
/// root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stage) {
    std::vector<std::uint32_t> material{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32)};
    for (unsigned char c : stage) {
        material.push_back(c);
    }
    std::seed_seq seq(material.begin(), material.end());
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [0, n); n > 0.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
    // Rejection keeps this unbiased and independent of the standard
    // library's distribution implementation.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_below(rng, i);
        using std::swap;
        swap(v[i - 1], v[j]);
    }
}

}
