#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace yieldcast {

using Rng = std::mt19937_64;

/// Derives an independent generator seed from a root seed and a stream name,
/// so every consumer of randomness (k-means restarts, chains, synthesis) gets
/// its own reproducible stream.
inline std::uint64_t substream_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
    // FNV-1a over the name, then splitmix64 finalization of the combination.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::uint64_t z = root ^ (h + 0x9e3779b97f4a7c15ULL + (index << 6) + (index >> 2));
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
    return Rng(substream_seed(root, name, index));
}

}  // namespace yieldcast
