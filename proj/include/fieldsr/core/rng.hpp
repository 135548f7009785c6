// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "fieldsr/core/errors.hpp"
#include "fieldsr/core/image.hpp"

namespace fieldsr {

// All randomness in the library flows through this generator so runs are
// reproducible bit-for-bit across platforms. std::* distributions are
// implementation-defined, hence the hand-rolled normal draw.
//
// Core generator: xoshiro256** seeded via splitmix64.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (int i = 0; i < 4; ++i) s_[i] = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi), rejection-free via 128-bit multiply.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) throw ParameterError("uniform_int: empty range");
    const uint64_t range = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    if (range == 0) return static_cast<int64_t>(next_u64());  // full 64-bit span
    __uint128_t m = static_cast<__uint128_t>(next_u64()) * range;
    return lo + static_cast<int64_t>(m >> 64);
  }

  // Standard normal via Box-Muller; the second draw of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  Image normal_image(int c, int h, int w) {
    Image out(c, h, w);
    for (size_t i = 0; i < out.size(); ++i) out[i] = normal();
    return out;
  }

  static uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4] = {};
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Derives an independent stream seed from a base seed and a tag path, e.g.
// derive_seed(run_seed, {kStreamRsd, cycle, view}). Substreams let per-view
// work run in any order (or in parallel) with identical results.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> tags) {
  uint64_t state = base ^ 0xa0761d6478bd642fULL;
  uint64_t acc = Rng::splitmix64(state);
  for (uint64_t t : tags) {
    state ^= t + 0x9e3779b97f4a7c15ULL + (acc << 6) + (acc >> 2);
    acc = Rng::splitmix64(state);
  }
  return acc;
}

// Stream tags for derive_seed. Distinct constants keep purposes decoupled.
enum StreamTag : uint64_t {
  kStreamScene = 1,
  kStreamDatasetView = 2,
  kStreamDenoiserInit = 3,
  kStreamDenoiserEpoch = 4,
  kStreamSampler = 5,
  kStreamRsd = 6,
  kStreamSds = 7,
  kStreamConditioning = 8,
  kStreamRender = 9,
  kStreamSync = 10,
  kStreamPretrain = 11,
  kStreamCompare2d = 12,
  kStreamValidation = 13,
};

}  // namespace fieldsr
