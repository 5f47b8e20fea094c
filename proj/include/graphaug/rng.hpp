#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace graphaug {

// All randomness in the library flows through explicitly seeded engines so
// that a run is reproducible from a single master seed.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derives a named sub-seed from a master seed. Distinct names give
// independent, reproducible streams (split, per-generator, per-cell, ...).
inline std::uint64_t sub_seed(std::uint64_t master, std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the name
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return splitmix64(master ^ splitmix64(h));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

}  // namespace graphaug
