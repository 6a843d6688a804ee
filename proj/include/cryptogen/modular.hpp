/*
 * Copyright 2026 The CryptoGen Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "cryptogen/errors.hpp"

namespace cryptogen {

using Slot = std::uint64_t;

namespace zp {

inline Slot add(Slot a, Slot b, Slot p) {
  const Slot s = a + b;
  return s >= p ? s - p : s;
}

inline Slot sub(Slot a, Slot b, Slot p) { return a >= b ? a - b : a + p - b; }

inline Slot neg(Slot a, Slot p) { return a == 0 ? 0 : p - a; }

inline Slot mul(Slot a, Slot b, Slot p) {
  return static_cast<Slot>((static_cast<unsigned __int128>(a) * b) % p);
}

inline Slot pow(Slot base, std::uint64_t e, Slot p) {
  Slot result = 1 % p;
  base %= p;
  while (e != 0) {
    if (e & 1U) result = mul(result, base, p);
    base = mul(base, base, p);
    e >>= 1U;
  }
  return result;
}

/// Deterministic Miller-Rabin for 64-bit integers.
inline bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t q : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    if (n % q == 0) return n == q;
  }
  std::uint64_t d = n - 1;
  int s = 0;
  while ((d & 1U) == 0) {
    d >>= 1U;
    ++s;
  }
  for (std::uint64_t a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    Slot x = pow(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool witness = true;
    for (int r = 1; r < s; ++r) {
      x = mul(x, x, n);
      if (x == n - 1) {
        witness = false;
        break;
      }
    }
    if (witness) return false;
  }
  return true;
}

/// Smallest prime p >= lower with p = 1 (mod 2 * n_slots).
inline Slot batching_prime(std::uint64_t lower, std::uint64_t n_slots) {
  const std::uint64_t step = 2 * n_slots;
  std::uint64_t p = lower <= 1 ? 1 : ((lower - 1 + step - 1) / step) * step + 1;
  if (p < lower) p += step;
  while (!is_prime(p)) p += step;
  return p;
}

/// Number of bits needed to write p - 1.
inline unsigned bit_length(Slot p) { return static_cast<unsigned>(std::bit_width(p - 1)); }

/// Signed view: values >= ceil(p/2) stand for negatives.
inline std::int64_t to_signed(Slot x, Slot p) {
  return x > p / 2 ? -static_cast<std::int64_t>(p - x) : static_cast<std::int64_t>(x);
}

inline Slot from_signed(std::int64_t v, Slot p) {
  const auto sp = static_cast<std::int64_t>(p);
  std::int64_t r = v % sp;
  if (r < 0) r += sp;
  return static_cast<Slot>(r);
}

/// True when v lies in the signed range represented by Z_p.
inline bool representable(std::int64_t v, Slot p) {
  const auto half = static_cast<std::int64_t>(p / 2);
  return v >= -half && v <= half;
}

}  // namespace zp

/// Seeded generator for masks and shares. Uses rejection sampling so the
/// stream is identical across standard library implementations.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound).
  std::uint64_t uniform(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % bound;
  }

  /// Uniform real in [0, 1).
  double unit() { return static_cast<double>(engine_() >> 11U) * 0x1.0p-53; }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = unit();
    while (u1 <= 0.0) u1 = unit();
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::vector<Slot> uniform_vector(std::size_t len, Slot p) {
    std::vector<Slot> out(len);
    for (auto& v : out) v = uniform(p);
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

/// Deterministic seed derivation for independent sub-streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30U)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27U)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31U);
}

inline bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

inline std::uint64_t pow2_ceil(std::uint64_t v) { return v <= 1 ? 1 : std::bit_ceil(v); }

inline unsigned ceil_log2(std::uint64_t v) { return v <= 1 ? 0 : static_cast<unsigned>(std::bit_width(v - 1)); }

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

}  // namespace cryptogen
