#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace topokd::rng {

// splitmix64; used to derive independent substream seeds from a base seed.
inline std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t substream(std::uint64_t seed, std::uint64_t tag) {
    return mix(seed ^ mix(tag));
}

// Uniform in [0,1) from the raw engine stream. std::uniform_real_distribution
// is implementation-defined; this keeps sequences identical across standard
// libraries for a given seed.
inline double uniform01(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

inline int uniform_int(std::mt19937_64& g, int lo, int hi_inclusive) {
    const auto span = static_cast<std::uint64_t>(hi_inclusive - lo) + 1;
    return lo + static_cast<int>(g() % span);
}

// Box-Muller, no spare caching so consumption per call is fixed.
inline double normal(std::mt19937_64& g) {
    double u1 = uniform01(g);
    while (u1 <= 0.0) u1 = uniform01(g);
    const double u2 = uniform01(g);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * M_PI * u2);
}

}  // namespace topokd::rng
