#pragma once

#include <cstdint>
#include <random>

namespace towerprod {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state)
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Independent stream for one replica: mt19937_64 seeded through seed_seq
/// with four SplitMix64 outputs started at seed + golden * (replica + 1).
inline Rng make_stream(std::uint64_t seed, std::uint64_t replica)
{
    std::uint64_t state = seed + 0x9E3779B97F4A7C15ULL * (replica + 1);
    std::uint32_t words[8];
    for (int i = 0; i < 4; ++i) {
        const std::uint64_t x = splitmix64(state);
        words[2 * i] = static_cast<std::uint32_t>(x);
        words[2 * i + 1] = static_cast<std::uint32_t>(x >> 32);
    }
    std::seed_seq seq(std::begin(words), std::end(words));
    return Rng(seq);
}

/// Uniform on [0,1) with 53 random bits.
inline double uniform01(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace towerprod
