#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace apl {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream name and up to two indices into an
/// independent 64-bit seed. Every random concern in a run (pool sampling,
/// generation, entropy MC, order randomization, shuffling, evaluation) draws
/// from its own derived stream so changing one concern never shifts another.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::uint64_t a = 0, std::uint64_t b = 0) noexcept;

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

/// Uniform double in [0, 1).
inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace apl
