// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

namespace schedlab {

/// Deterministic 64-bit generator (splitmix64 step). Streams must reproduce
/// across standard-library implementations, which std::<random> distributions
/// do not guarantee, so sampling helpers are spelled out here.
class rng {
public:
  explicit rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [lo, hi] inclusive. Requires lo <= hi.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  /// Exponential with the given mean, by inverse CDF.
  double exponential(double mean) { return -mean * std::log1p(-next_double()); }

  bool bernoulli(double p) { return next_double() < p; }

private:
  uint64_t state_;
};

/// Derives an independent child seed from (seed, tag, index) so every UE and
/// subsystem owns its own stream and results do not depend on the order in
/// which streams are consumed.
inline uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t index = 0) {
  rng g(seed ^ (tag * 0xd1342543de82ef95ull) ^ (index * 0xaf251af3b0f025b5ull + 0x9e37ull));
  g.next_u64();
  return g.next_u64();
}

} // namespace schedlab
