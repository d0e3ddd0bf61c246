#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace lfg {

// std::shuffle and the std distributions are implementation-defined, so
// every seeded draw in the engine goes through these helpers to keep run
// logs identical across standard libraries.

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <typename T>
void seeded_shuffle(std::span<T> items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace lfg
