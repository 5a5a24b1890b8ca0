#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cimnas {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derive a seed from a master seed and a path of stream identifiers.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = mix_seed(master);
    for (auto p : path) {
        s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
    }
    return s;
}

/// Uniform double in [0, 1) built from the top 53 bits; stable across standard libraries.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace cimnas
