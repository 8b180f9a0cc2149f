#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tmtb {

using Rng = std::mt19937_64;

/// splitmix64 finaliser.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seed for an independent stream keyed by e.g. (seed, epoch, sample id, purpose).
inline std::uint64_t stream_seed(std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = 0x243F6A8885A308D3ULL;
    for (auto k : keys) h = mix64(h ^ mix64(k));
    return h;
}

inline Rng make_rng(std::initializer_list<std::uint64_t> keys) { return Rng(stream_seed(keys)); }

}  // namespace tmtb
