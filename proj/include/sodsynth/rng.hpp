#pragma once

#include <cstdint>
#include <random>

namespace sodsynth {

/// splitmix64 step; used to fold seeds and indices into fresh stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ b); }

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix64(mix64(a, b) ^ c);
}

/// Independent RNG stream for (seed, tag, index...). Work scheduled in
/// parallel stays reproducible because every unit derives its own stream.
inline std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t tag,
                                  std::uint64_t index = 0) {
    return std::mt19937_64(mix64(seed, tag, index));
}

/// Stream tags, one per independent consumer of randomness.
namespace rng_tag {
constexpr std::uint64_t kToyDataset = 0x11;
constexpr std::uint64_t kSynthesis = 0x22;
constexpr std::uint64_t kModelInit = 0x33;
constexpr std::uint64_t kTrainStep = 0x44;
constexpr std::uint64_t kTrainShuffle = 0x46;
constexpr std::uint64_t kGradCheck = 0x55;
} // namespace rng_tag

} // namespace sodsynth
