// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

namespace lvp {

// splitmix64 finalizer, used both as a mixer for counter-based streams and
// as the seeding step everywhere a u64 seed fans out into substreams.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
  return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

// PCG32: small, fast, and a pure function of its seed/stream pair, which is
// what the renderer's per-pixel determinism contract needs.
struct Pcg32 {
  uint64_t state = 0x853c49e6748fea9bull;
  uint64_t inc = 0xda3e39cb94b95bdbull;

  Pcg32() = default;
  Pcg32(uint64_t seed, uint64_t stream = 1) { reseed(seed, stream); }

  void reseed(uint64_t seed, uint64_t stream = 1) {
    state = 0;
    inc = (stream << 1u) | 1u;
    next_u32();
    state += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state;
    state = old * 6364136223846793005ull + inc;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  uint64_t next_u64() { return (static_cast<uint64_t>(next_u32()) << 32) | next_u32(); }

  // Uniform in [0, 1).
  double next_double() { return next_u32() * (1.0 / 4294967296.0); }

  // Uniform integer in [0, n).
  uint32_t next_below(uint32_t n) {
    // Lemire-style rejection to kill modulo bias.
    uint64_t m = static_cast<uint64_t>(next_u32()) * n;
    uint32_t lo = static_cast<uint32_t>(m);
    if (lo < n) {
      uint32_t t = (0u - n) % n;
      while (lo < t) {
        m = static_cast<uint64_t>(next_u32()) * n;
        lo = static_cast<uint32_t>(m);
      }
    }
    return static_cast<uint32_t>(m >> 32);
  }

  // Standard normal via Box-Muller (one value per call, cache discarded so
  // draws stay a deterministic function of call order).
  double next_normal() {
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
};

}  // namespace lvp
