#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cocylab {

// Seeded random source with a fully pinned output sequence. The engine is
// std::mt19937_64 (sequence fixed by the standard); the floating-point
// conversions are done here rather than through <random> distributions,
// whose algorithms are implementation-defined.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64/u53/box-muller/v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal via the Box-Muller transform; values come in pairs.
  double normal();

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// SplitMix64 finalizer; decorrelates per-trial seeds derived from one base.
std::uint64_t splitmix64(std::uint64_t x);

// Seed of trial `index` under `base`. Trial i's seed does not depend on the
// total trial count, so seed sets are nested as trials grow.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace cocylab
