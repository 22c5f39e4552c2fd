#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace signmf {

/// splitmix64 step; the usual seed expander for mt19937_64 streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic child seed from a root seed and a list of salts, so that
/// parallel work items (restart, K, split index) get independent streams
/// regardless of scheduling.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> salts) {
    std::uint64_t s = seed;
    std::uint64_t h = splitmix64(s);
    for (std::uint64_t salt : salts) {
        s ^= salt + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        h ^= splitmix64(s);
    }
    return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

/// Unbiased draw from [0, bound) advancing a splitmix64 state; used where the
/// exact sequence must not depend on the standard library (splits, subset
/// sampling).
inline std::uint64_t bounded_uint64(std::uint64_t& state, std::uint64_t bound) {
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do {
        draw = splitmix64(state);
    } while (draw >= limit);
    return draw % bound;
}

}  // namespace signmf
