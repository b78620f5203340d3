#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "beacons/bytes.hpp"

namespace beacons::simnet {

/// SplitMix64 finaliser. Used to derive sub-seeds, never as a generator.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic seed for a labelled sub-stream of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

/// Seeded generator with platform-independent sampling. std::mt19937_64
/// output is fixed by the standard; the std distributions are not, so every
/// sampler here is written out.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, bound). bound > 0.
  std::uint64_t below(std::uint64_t bound);
  bool bernoulli(double p) { return uniform() < p; }
  /// Exact Poisson sampler: product-of-uniforms for small means, additive
  /// splitting for larger ones.
  std::uint64_t poisson(double mean);

  template <std::size_t N>
  ByteArray<N> bytes() {
    ByteArray<N> out{};
    for (std::size_t i = 0; i < N; i += 8) {
      auto v = next();
      for (std::size_t k = 0; k < 8 && i + k < N; ++k) out[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
    }
    return out;
  }

  /// Independent generator for a named sub-stream.
  Rng split(std::string_view label, std::uint64_t index = 0) const {
    return Rng(derive_seed(seed_, label, index));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace beacons::simnet
