// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/common.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace melssl {

/**
 * Deterministic random source (xoshiro256++ seeded via splitmix64).
 *
 * Self-contained so that streams are reproducible across standard
 * libraries and platforms. Independent sub-streams are derived by
 * name with derive(), which keeps consumers order-insensitive.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) {
      // splitmix64
      x += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      word = z ^ (z >> 31);
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /** Uniform double in [0, 1). */
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /** Uniform integer in [lo, hi], inclusive. */
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw ConfigError("uniform_int: empty range");
    const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());  // full span
    const auto r = static_cast<unsigned __int128>(next_u64()) * range;
    return lo + static_cast<std::int64_t>(r >> 64);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller; one value per call keeps the stream simple to reason about.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  /** Normal truncated to +-2 stddev, the usual transformer init. */
  double truncated_normal(double stddev) {
    for (;;) {
      const double x = normal(0.0, stddev);
      if (std::abs(x) <= 2.0 * stddev) return x;
    }
  }

  /** Independent sub-stream identified by (tag, a, b). */
  Rng derive(std::string_view tag, std::uint64_t a = 0,
             std::uint64_t b = 0) const {
    std::uint64_t h = fnv1a64(tag);
    h = hash_combine(h, state_[0]);
    h = hash_combine(h, state_[3]);
    h = hash_combine(h, a);
    h = hash_combine(h, b);
    return Rng(h);
  }

  void shuffle(std::vector<int>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j =
          static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

}  // namespace melssl
