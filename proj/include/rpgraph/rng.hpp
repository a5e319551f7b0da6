#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rpgraph {

/// Counter-based random draws: every value is a pure function of
/// (seed, node, dim), so matrix entries come out identical no matter
/// which thread or iteration order produces them.
namespace counter_rng {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t node, std::uint64_t dim,
                         std::uint64_t salt) {
    std::uint64_t h = mix64(seed ^ 0x8f1bbcdcbfa53e0bull);
    h = mix64(h ^ node);
    h = mix64(h ^ (dim + 0x2545f4914f6cdd1dull));
    return mix64(h ^ salt);
}

/// Uniform in [0, 1) with 53 random mantissa bits.
inline double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two independent counter draws.
inline double normal(std::uint64_t seed, std::uint64_t node, std::uint64_t dim) {
    const double u1 = to_unit(key(seed, node, dim, 0x1d8af6c1));
    const double u2 = to_unit(key(seed, node, dim, 0x6b79f9cd));
    const double r = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), u1 < 1 so finite
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

/// Ternary draw: +sqrt(s) w.p. 1/(2s), -sqrt(s) w.p. 1/(2s), else 0.
inline double ternary(std::uint64_t seed, std::uint64_t node, std::uint64_t dim, double s) {
    const double u = to_unit(key(seed, node, dim, 0x3c91a7e5));
    const double half = 1.0 / (2.0 * s);
    if (u < half) return std::sqrt(s);
    if (u < 2.0 * half) return -std::sqrt(s);
    return 0.0;
}

}  // namespace counter_rng

/// Stable derived seed for sub-streams (per graph, per epoch, ...).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return counter_rng::mix64(counter_rng::mix64(master ^ 0xa0761d6478bd642full) ^ stream);
}

}  // namespace rpgraph
