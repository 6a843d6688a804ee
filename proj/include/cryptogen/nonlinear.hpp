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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cryptogen/errors.hpp"
#include "cryptogen/fixed_point.hpp"
#include "cryptogen/gelu_coefficients.hpp"
#include "cryptogen/mpc.hpp"

namespace cryptogen {

/// Iteration counts for the Newton-based protocols.
struct NonlinearConfig {
  int reciprocal_iterations = 4;
  int rsqrt_iterations = 3;
};

/// Fixed-point additive mask for disallowed attention positions.
inline std::int64_t causal_mask_constant(const FixedPointParams& fp) { return -(std::int64_t{1} << (fp.f + 6)); }

// The protocols below are templates over a domain D (PlainDomain or
// ShareDomain). Every step is a domain operation, so the plaintext oracle
// and the secret-shared evaluation produce the same residues.
namespace protocols {

template <class D>
using Value = typename D::value_type;

template <class D>
Value<D> select(D& d, const Value<D>& bit, const Value<D>& if_one, const Value<D>& if_zero) {
  return d.add(if_zero, d.mul(bit, d.sub(if_one, if_zero)));
}

/// round(x / 2^bits), ties upward.
template <class D>
Value<D> round_shift(D& d, const Value<D>& x, int bits) {
  if (bits <= 0) return x;
  return d.trunc(d.add_const(x, std::int64_t{1} << (bits - 1)), bits);
}

/// Maximum over all elements (length-1 result), as a tree of comparisons.
template <class D>
Value<D> max_all(D& d, Value<D> v) {
  if (D::size(v) == 0) throw DimensionError("max of an empty vector");
  while (D::size(v) > 1) {
    const std::size_t n = D::size(v);
    const std::size_t half = n / 2;
    auto a = D::slice(v, 0, half);
    auto b = D::slice(v, half, 2 * half);
    auto a_less = d.ltz(d.sub(a, b));
    auto m = select(d, a_less, b, a);
    v = n % 2 == 1 ? D::concat(std::move(m), D::slice(v, 2 * half, n)) : std::move(m);
  }
  return v;
}

/// Guard bits available for a constant multiply whose product has
/// `magnitude_bits` above the fraction bits.
inline int headroom_bits(const FixedPointParams& fp, int used_bits, int cap) {
  return std::clamp(fp.log2_p() - 1 - used_bits, 0, cap);
}

/// Guard bits for the GELU polynomial constants.
inline int gelu_guard_bits(const FixedPointParams& fp) { return headroom_bits(fp, 2 * fp.f + 2, fp.f); }

/// 2 * P4(a) at scale f + 1 (that is, 2h(a) at scale f) for 0 <= a <= 3.2.
template <class D>
Value<D> gelu_quartic(D& d, const Value<D>& a, const FixedPointParams& fp) {
  using namespace gelu_fit;
  const int f = fp.f;
  const int s = gelu_guard_bits(fp);
  auto sq = d.mul(a, a);
  auto lin = d.mul_const(a, FixedPointParams::quantize(kInnerLinear, f));
  auto inner = d.trunc(d.add_const(d.add(sq, lin), FixedPointParams::quantize(kInnerConstant, 2 * f)), f);
  auto inner_sq = d.trunc(d.mul(inner, inner), f);
  auto t1 = d.mul_const(inner_sq, FixedPointParams::quantize(kOuterQuadratic, f + s));
  auto t2 = d.mul_const(a, FixedPointParams::quantize(kOuterLinear, f + s));
  auto full = d.add_const(d.add(t1, t2), FixedPointParams::quantize(kOuterConstant, 2 * f + s));
  return d.trunc(full, f + s - 1);
}

/// GELU(x) = x/2 + h(|x|): quartic inside [-3.2, 3.2], exactly x above and
/// 0 below. The quartic is shifted by its own fixed-point value at 0 so
/// GELU(0) = 0 exactly.
template <class D>
Value<D> gelu(D& d, const Value<D>& x, const FixedPointParams& fp) {
  const std::int64_t range = FixedPointParams::quantize(gelu_fit::kRange, fp.f);
  auto neg = d.ltz(x);
  auto a = d.sub(x, d.mul_const(d.mul(neg, x), 2));
  auto above = d.ltz(d.add_const(d.neg(a), range));
  auto clamped = d.add(a, d.mul(above, d.add_const(d.neg(a), range)));
  PlainDomain plain(fp.p);
  const auto at_zero = plain.signed_values(gelu_quartic(plain, std::vector<Slot>{0}, fp))[0];
  auto two_h = d.add_const(gelu_quartic(d, clamped, fp), -at_zero);
  auto y = select(d, above, a, two_h);
  return d.trunc(d.add(x, y), 1);
}

/// Fraction bits used inside the reciprocal iteration.
inline int reciprocal_bits(const FixedPointParams& fp) { return std::clamp((fp.log2_p() - 3) / 2, 1, 2 * fp.f); }

/// Fraction bits used inside the inverse square root iteration.
inline int rsqrt_bits(const FixedPointParams& fp) { return std::clamp((fp.log2_p() - 5) / 2, 1, 2 * fp.f); }

/// Normalized reciprocal of positive integers v: returns (w, k) with
/// v = M * 2^k, M in [1, 2), and w ~ 1/M at `bits` fraction bits.
/// Initial guess 24/17 - 8/17 M followed by Newton steps w <- w (2 - M w).
template <class D>
std::pair<Value<D>, Value<D>> reciprocal(D& d, const Value<D>& v, int bits, int iterations) {
  auto [m, k] = d.normalize(v, bits, 1, 0);
  auto w = d.add_const(d.trunc(d.mul_const(m, -FixedPointParams::quantize(8.0 / 17.0, bits)), bits),
                       FixedPointParams::quantize(24.0 / 17.0, bits));
  for (int it = 0; it < iterations; ++it) {
    auto mw = d.trunc(d.mul(m, w), bits);
    auto corr = d.add_const(d.neg(mw), std::int64_t{2} << bits);
    w = d.trunc(d.mul(w, corr), bits);
  }
  return {std::move(w), std::move(k)};
}

/// Softmax over all elements at scale f:
///   subtract the max; split x = -ln2 * z + r with integer z >= 0 and
///   r in (-ln2, 0]; exp(r) ~ 0.3585 (r + 1.353)^2 + 0.344; shift right by z
///   (clamped at f + 1, past which every value is already 0) through a
///   bit-decomposition multiplexer; divide by the sum with the normalized
///   Newton reciprocal; round to nearest.
template <class D>
Value<D> softmax(D& d, const Value<D>& x, const FixedPointParams& fp, const NonlinearConfig& cfg = {}) {
  const std::size_t len = D::size(x);
  if (len == 0) throw DimensionError("softmax of an empty vector");
  const int f = fp.f;
  auto shifted = d.sub(x, D::broadcast(max_all(d, x), len));
  auto z = d.trunc(d.mul_const(d.neg(shifted), FixedPointParams::quantize(1.0 / std::log(2.0), f)), 2 * f);
  auto r = d.add(shifted, d.mul_const(z, FixedPointParams::quantize(std::log(2.0), f)));
  auto t = d.add_const(r, FixedPointParams::quantize(1.353, f));
  const int g = headroom_bits(fp, 2 * f + 1, f);
  auto e = d.add_const(d.trunc(d.mul_const(d.mul(t, t), FixedPointParams::quantize(0.3585, g)), f + g),
                       FixedPointParams::quantize(0.344, f));

  const std::int64_t z_max = f + 1;
  auto over = d.ltz(d.add_const(d.neg(z), z_max));
  auto z_clamped = select(d, over, d.constant(len, z_max), z);
  const int nbits = static_cast<int>(std::bit_width(static_cast<std::uint64_t>(z_max)));
  auto bits = d.bit_decompose(z_clamped, nbits);
  for (int i = 0; i < nbits; ++i) {
    e = select(d, bits[static_cast<std::size_t>(i)], d.trunc(e, 1 << i), e);
  }

  const int rb = reciprocal_bits(fp);
  auto [w, k] = reciprocal(d, d.sum(e), rb, cfg.reciprocal_iterations);
  auto prod = d.mul(e, D::broadcast(w, len));
  auto amount = d.add_const(d.neg(k), f - rb);
  return d.shift(prod, D::broadcast(amount, len), true);
}

/// LayerNorm over all elements: gamma * (x - mean) / sqrt(var + 2^-f) + beta.
/// gamma and beta are public fixed-point constants at scale f. The inverse
/// square root normalizes var = M * 4^e with M in [1, 4), starts from the
/// linear guess 1.0664 - 0.1523 M and runs Newton steps
/// y <- y (3 - M y^2) / 2, then rescales by 2^-e.
template <class D>
Value<D> layernorm(D& d, const Value<D>& x, std::span<const std::int64_t> gamma, std::span<const std::int64_t> beta,
                   const FixedPointParams& fp, const NonlinearConfig& cfg = {}) {
  const std::size_t len = D::size(x);
  if (len < 2) throw DimensionError("layernorm needs at least two elements");
  if (gamma.size() != len || beta.size() != len) throw DimensionError("layernorm gain/bias length mismatch");
  const int f = fp.f;
  const int u = std::max(f, fp.log2_p() - f - 8);
  const auto inv_len = FixedPointParams::quantize(1.0 / static_cast<double>(len), u);
  auto mean = round_shift(d, d.mul_const(d.sum(x), inv_len), u);
  auto centered = d.sub(x, D::broadcast(mean, len));
  auto sq = d.trunc(d.mul(centered, centered), f);
  auto var = round_shift(d, d.mul_const(d.sum(sq), inv_len), u);
  auto var_eps = d.add_const(var, 1);

  const int t = rsqrt_bits(fp);
  auto [m, e] = d.normalize(var_eps, t, 2, f);
  auto y = d.add_const(d.trunc(d.mul_const(m, -FixedPointParams::quantize(0.1523, t)), t),
                       FixedPointParams::quantize(1.0664, t));
  for (int it = 0; it < cfg.rsqrt_iterations; ++it) {
    auto y2 = d.trunc(d.mul(y, y), t);
    auto my2 = d.trunc(d.mul(m, y2), t);
    y = d.trunc(d.mul(y, d.add_const(d.neg(my2), std::int64_t{3} << t)), t + 1);
  }
  auto inv_std = d.shift(y, d.add_const(d.neg(e), f - t), true);
  auto normed = d.trunc(d.mul(centered, D::broadcast(inv_std, len)), f);
  return d.add_const(d.trunc(d.mul_const(normed, gamma), f), beta);
}

/// Fixed-point rescale after a product: floor(x / 2^f).
template <class D>
Value<D> rescale(D& d, const Value<D>& x, const FixedPointParams& fp) {
  return d.trunc(x, fp.f);
}

}  // namespace protocols

// Secret-shared entry points.

inline SharePair truncate(const SharePair& s, const FixedPointParams& fp, MpcChannel& ch) {
  ShareDomain d(ch);
  return protocols::rescale(d, s, fp);
}

inline SharePair mpc_gelu(const SharePair& s, const FixedPointParams& fp, MpcChannel& ch) {
  ShareDomain d(ch);
  return protocols::gelu(d, s, fp);
}

inline SharePair mpc_softmax(const SharePair& s, const FixedPointParams& fp, MpcChannel& ch,
                             const NonlinearConfig& cfg = {}) {
  ShareDomain d(ch);
  return protocols::softmax(d, s, fp, cfg);
}

inline SharePair mpc_layernorm(const SharePair& s, std::span<const std::int64_t> gamma,
                               std::span<const std::int64_t> beta, const FixedPointParams& fp, MpcChannel& ch,
                               const NonlinearConfig& cfg = {}) {
  ShareDomain d(ch);
  return protocols::layernorm(d, s, gamma, beta, fp, cfg);
}

// Plaintext fixed-point counterparts (the oracle's arithmetic).

inline std::vector<Slot> plain_gelu(const std::vector<Slot>& x, const FixedPointParams& fp) {
  PlainDomain d(fp.p);
  return protocols::gelu(d, x, fp);
}

inline std::vector<Slot> plain_softmax(const std::vector<Slot>& x, const FixedPointParams& fp,
                                       const NonlinearConfig& cfg = {}) {
  PlainDomain d(fp.p);
  return protocols::softmax(d, x, fp, cfg);
}

inline std::vector<Slot> plain_layernorm(const std::vector<Slot>& x, std::span<const std::int64_t> gamma,
                                         std::span<const std::int64_t> beta, const FixedPointParams& fp,
                                         const NonlinearConfig& cfg = {}) {
  PlainDomain d(fp.p);
  return protocols::layernorm(d, x, gamma, beta, fp, cfg);
}

/// Real-valued GELU polynomial (for approximation-error checks).
inline double gelu_polynomial(double x) {
  using namespace gelu_fit;
  const double a = std::fabs(x);
  if (a > kRange) return x > 0 ? x : 0.0;
  const double inner = a * a + kInnerLinear * a + kInnerConstant;
  return 0.5 * x + kOuterQuadratic * inner * inner + kOuterLinear * a + kOuterConstant;
}

/// Reference GELU x * Phi(x).
inline double gelu_reference(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace cryptogen
