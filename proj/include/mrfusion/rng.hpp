#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mrfusion {

/// Derives an independent, reproducible generator for a named pipeline stage.
/// The same (seed, stage, index) triple always yields the same stream.
inline std::mt19937_64 substream(std::uint64_t seed, std::string_view stage, std::uint64_t index = 0) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (char c : stage) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t s = mix(seed ^ mix(h ^ mix(index)));
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(h)};
    return std::mt19937_64(seq);
}

}  // namespace mrfusion
