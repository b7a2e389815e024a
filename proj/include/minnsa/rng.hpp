#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "minnsa/common.hpp"

namespace minnsa {

using Rng = std::mt19937_64;

/// SplitMix64 step; used as the counter-based seed splitter so that every
/// component (data generation, init, shuffling, folds, ...) gets an
/// independent stream from one master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Derives a child seed from (master, tag, index). Same inputs, same seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index = 0) {
    std::uint64_t x = splitmix64(master ^ fnv1a64(tag));
    return splitmix64(x ^ (index * 0xD6E8FEB86659FD93ULL));
}

inline Rng make_rng(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) {
    return Rng(derive_seed(master, tag, index));
}

}  // namespace minnsa
