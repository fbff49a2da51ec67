#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mhalab {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for an independent stream: hash(master, domain, index).
/// Datasets use domain "data" with the replicate index; quadrature nodes use "query".
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view domain,
                                    std::uint64_t index = 0) noexcept {
    return mix64(mix64(master ^ fnv1a(domain)) + mix64(index + 0x632be59bd9b4e019ULL));
}

} // namespace mhalab
