#pragma once

#include <cstdint>
#include <random>

namespace hybridflow {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from (master, stream) with a splitmix64 finalizer.
/// Tasks seeded this way give the same results whether they run serially or in parallel.
constexpr std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream) {
    return Rng(split_seed(master, stream));
}

} // namespace hybridflow
