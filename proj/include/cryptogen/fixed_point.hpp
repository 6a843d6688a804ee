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
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cryptogen/errors.hpp"
#include "cryptogen/modular.hpp"
#include "json.hpp"

namespace cryptogen {

/// Reals are encoded as round(v * 2^f) in Z_p; residues above p/2 are negative.
struct FixedPointParams {
  int f = 8;
  Slot p = 0;

  FixedPointParams() = default;
  FixedPointParams(int frac_bits, Slot modulus) : f(frac_bits), p(modulus) { validate(); }

  void validate() const {
    if (f < 1 || f > 20) throw ParamError("fraction bits must be in [1, 20], got " + std::to_string(f));
    if (p < 3) throw ParamError("fixed-point modulus is not set");
    // One product of two values of magnitude 2^(f+3) plus accumulation
    // headroom must stay below p.
    if (2 * f + 6 >= 63 || (Slot{1} << static_cast<unsigned>(2 * f + 6)) >= p) {
      throw OverflowError("2^(2f+6) must be below p (f=" + std::to_string(f) + ", p=" + std::to_string(p) + ")");
    }
  }

  /// floor(log2 p): every signed value below 2^(log2_p - 1) in magnitude is
  /// representable.
  int log2_p() const { return static_cast<int>(std::bit_width(p)) - 1; }

  std::int64_t scale() const { return std::int64_t{1} << f; }

  Slot encode(double v) const { return zp::from_signed(quantize(v, f), p); }
  double decode(Slot x) const { return static_cast<double>(zp::to_signed(x, p)) / static_cast<double>(scale()); }

  std::vector<Slot> encode(std::span<const double> v) const {
    std::vector<Slot> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = encode(v[i]);
    return out;
  }

  std::vector<double> decode(std::span<const Slot> v) const {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = decode(v[i]);
    return out;
  }

  /// round(v * 2^bits) as a signed integer.
  static std::int64_t quantize(double v, int bits) { return std::llround(std::ldexp(v, bits)); }
};

inline void to_json(nlohmann::json& j, const FixedPointParams& fp) { j = {{"f", fp.f}, {"p", fp.p}}; }

/// Elementwise arithmetic on plain Z_p vectors. The nonlinear protocols are
/// written against this interface; the share domain implements the same
/// operations on secret shares, so both produce identical residues.
class PlainDomain {
 public:
  using value_type = std::vector<Slot>;

  explicit PlainDomain(Slot p) : p_(p) {}

  Slot modulus() const { return p_; }

  // Layout (free in every domain).
  static std::size_t size(const value_type& v) { return v.size(); }
  static value_type slice(const value_type& v, std::size_t begin, std::size_t end) {
    return value_type(v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end));
  }
  static value_type concat(value_type a, const value_type& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  static value_type broadcast(const value_type& v, std::size_t len) { return value_type(len, v.at(0)); }

  value_type constant(std::size_t len, std::int64_t c) const { return value_type(len, zp::from_signed(c, p_)); }

  // Local linear operations.
  value_type sum(const value_type& v) const {
    Slot s = 0;
    for (Slot x : v) s = zp::add(s, x, p_);
    return {s};
  }
  value_type add(const value_type& a, const value_type& b) const {
    return zip(a, b, [this](Slot x, Slot y) { return zp::add(x, y, p_); });
  }
  value_type sub(const value_type& a, const value_type& b) const {
    return zip(a, b, [this](Slot x, Slot y) { return zp::sub(x, y, p_); });
  }
  value_type neg(const value_type& a) const {
    value_type out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = zp::neg(a[i], p_);
    return out;
  }
  value_type add_const(const value_type& a, std::int64_t c) const { return add(a, constant(a.size(), c)); }
  value_type add_const(const value_type& a, std::span<const std::int64_t> c) const {
    return add(a, lift(c));
  }
  value_type mul_const(const value_type& a, std::int64_t c) const {
    const Slot cc = zp::from_signed(c, p_);
    value_type out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = zp::mul(a[i], cc, p_);
    return out;
  }
  value_type mul_const(const value_type& a, std::span<const std::int64_t> c) const {
    return zip(a, lift(c), [this](Slot x, Slot y) { return zp::mul(x, y, p_); });
  }

  // Operations that need interaction in the share domain.
  value_type mul(const value_type& a, const value_type& b) const {
    return zip(a, b, [this](Slot x, Slot y) { return zp::mul(x, y, p_); });
  }

  /// floor(x / 2^bits) on the signed value.
  value_type trunc(const value_type& a, int bits) const {
    return map(a, [bits](std::int64_t x) { return floor_shift(x, bits); });
  }

  /// 1 where the signed value is negative, else 0.
  value_type ltz(const value_type& a) const {
    return map(a, [](std::int64_t x) -> std::int64_t { return x < 0 ? 1 : 0; });
  }

  /// Bits 0..nbits-1 of each value (values must lie in [0, 2^nbits)).
  std::vector<value_type> bit_decompose(const value_type& a, int nbits) const {
    std::vector<value_type> bits(static_cast<std::size_t>(nbits), value_type(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto x = static_cast<std::uint64_t>(std::max<std::int64_t>(zp::to_signed(a[i], p_), 0));
      for (int b = 0; b < nbits; ++b) bits[static_cast<std::size_t>(b)][i] = (x >> static_cast<unsigned>(b)) & 1U;
    }
    return bits;
  }

  /// Writes each positive x as M * 2^(offset + step * e) with M in [1, 2^step)
  /// and returns (floor(M * 2^frac), e). Non-positive inputs are treated as 1.
  std::pair<value_type, value_type> normalize(const value_type& a, int frac, int step, int offset) const {
    value_type mant(a.size()), expo(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::int64_t x = std::max<std::int64_t>(zp::to_signed(a[i], p_), 1);
      const int msb = static_cast<int>(std::bit_width(static_cast<std::uint64_t>(x))) - 1;
      const int e = floor_div(msb - offset, step);
      const int shift = frac - offset - step * e;
      const std::int64_t m = shift >= 0 ? x << shift : floor_shift(x, -shift);
      mant[i] = zp::from_signed(m, p_);
      expo[i] = zp::from_signed(e, p_);
    }
    return {std::move(mant), std::move(expo)};
  }

  /// x * 2^s for per-element signed amounts s; right shifts floor, or round
  /// to nearest when `round` is set.
  value_type shift(const value_type& a, const value_type& amount, bool round) const {
    value_type out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::int64_t x = zp::to_signed(a[i], p_);
      const std::int64_t s = zp::to_signed(amount[i], p_);
      std::int64_t r;
      if (s >= 0) {
        r = s >= 62 ? 0 : x << s;
      } else if (-s >= 62) {
        r = x < 0 ? -1 : 0;
      } else {
        r = round ? floor_shift(x + (std::int64_t{1} << (-s - 1)), static_cast<int>(-s))
                  : floor_shift(x, static_cast<int>(-s));
      }
      out[i] = zp::from_signed(r, p_);
    }
    return out;
  }

  /// Plain residues as signed integers (for reporting; not a protocol step).
  std::vector<std::int64_t> signed_values(const value_type& a) const {
    std::vector<std::int64_t> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = zp::to_signed(a[i], p_);
    return out;
  }

  static std::int64_t floor_shift(std::int64_t x, int bits) {
    if (bits <= 0) return x;
    return x >= 0 ? (x >> bits) : -((-x + (std::int64_t{1} << bits) - 1) >> bits);
  }

 private:
  static int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

  value_type lift(std::span<const std::int64_t> c) const {
    value_type out(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = zp::from_signed(c[i], p_);
    return out;
  }

  template <class Op>
  static value_type zip(const value_type& a, const value_type& b, Op op) {
    if (a.size() != b.size()) throw DimensionError("elementwise operands differ in length");
    value_type out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
    return out;
  }

  template <class Op>
  value_type map(const value_type& a, Op op) const {
    value_type out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = zp::from_signed(op(zp::to_signed(a[i], p_)), p_);
    return out;
  }

  Slot p_;
};

}  // namespace cryptogen
