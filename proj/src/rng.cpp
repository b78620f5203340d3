#include "beacons/simnet/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace beacons::simnet {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  // FNV-1a over the label, then mixed with the parent seed and index.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(seed ^ h) + index);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::below: bound must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return v % bound;
}

std::uint64_t Rng::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw std::invalid_argument("Rng::poisson: bad mean");
  // Poisson(a + b) = Poisson(a) + Poisson(b); keep each chunk small enough
  // that exp(-chunk) stays far from underflow.
  constexpr double kChunk = 16.0;
  std::uint64_t total = 0;
  while (mean > 0.0) {
    const double m = mean > kChunk ? kChunk : mean;
    mean -= m;
    const double limit = std::exp(-m);
    double prod = uniform();
    while (prod > limit) {
      ++total;
      prod *= uniform();
    }
  }
  return total;
}

}  // namespace beacons::simnet
