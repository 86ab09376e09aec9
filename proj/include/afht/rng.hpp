#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace afht {

// Mixes a 64-bit key (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

// Stable 64-bit hash of a string (FNV-1a), used to key random streams by name.
std::uint64_t hash_string(std::string_view s);

// Derives an independent sub-seed from a parent seed and a list of keys.
template <typename... Keys>
std::uint64_t derive_seed(std::uint64_t seed, Keys... keys) {
  std::uint64_t h = mix64(seed ^ 0x9e3779b97f4a7c15ULL);
  ((h = mix64(h ^ static_cast<std::uint64_t>(keys))), ...);
  return h;
}

// mt19937_64 with portable mappings to reals and integers; the standard
// distributions are implementation-defined, which would break bit-exact
// regeneration across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi], inclusive. Rejection sampling, no modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace afht
