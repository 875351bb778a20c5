#pragma once

#include <cstdint>
#include <random>

namespace gfmmr {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent streams from (seed, index).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// A generator keyed by (seed, stream). Identical keys give identical sequences
// regardless of which thread or in which order the streams are consumed.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(mix64(seed) >> 32),
                      static_cast<std::uint32_t>(mix64(seed)),
                      static_cast<std::uint32_t>(mix64(stream ^ 0x5bd1e995ULL) >> 32),
                      static_cast<std::uint32_t>(mix64(stream ^ 0x5bd1e995ULL))};
    return Rng(seq);
}

}  // namespace gfmmr
