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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "cryptogen/backend.hpp"
#include "cryptogen/encodings.hpp"
#include "cryptogen/errors.hpp"
#include "cryptogen/matrix.hpp"

namespace cryptogen {

/// Sums slots i, i+stride, ..., i+(count-1)*stride into slot i using
/// log2(count) rotate-and-add steps. count must be a power of two.
inline SlotCiphertext fold_stride(const SlotCiphertext& a, std::size_t stride, std::size_t count, Context& ctx) {
  if (!is_pow2(count)) throw DimensionError("fold count must be a power of two");
  if (stride * count > ctx.n_slots()) throw DimensionError("fold span exceeds slot count");
  SlotCiphertext acc = a;
  for (std::size_t s = stride; s < stride * count; s *= 2) {
    acc = ctx.add(acc, ctx.rotate(acc, static_cast<std::int64_t>(s)));
  }
  return acc;
}

/// Folding sum: slot 0 of every contiguous block of width `block` receives
/// the block's sum. log2(block) rotations and additions; other slots hold
/// partial sums.
inline SlotCiphertext fold_sum(const SlotCiphertext& a, std::size_t block, Context& ctx) {
  if (!is_pow2(block) || ctx.n_slots() % block != 0) {
    throw DimensionError("fold_sum block must be a power of two dividing the slot count");
  }
  return fold_stride(a, 1, block, ctx);
}

/// Plaintext with ones on slots [begin, end).
inline PlainVector range_mask(std::size_t begin, std::size_t end, const Context& ctx) {
  std::vector<Slot> m(ctx.n_slots(), 0);
  for (std::size_t i = begin; i < end && i < m.size(); ++i) m[i] = 1;
  return PlainVector(std::move(m));
}

/// Plaintext selecting the first `len` slots of each of `blocks` blocks of width `stride`.
inline PlainVector block_mask(std::size_t blocks, std::size_t stride, std::size_t len, const Context& ctx) {
  std::vector<Slot> m(ctx.n_slots(), 0);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t r = 0; r < len; ++r) m[b * stride + r] = 1;
  return PlainVector(std::move(m));
}

/// Block geometry used to pack an m-row outer matrix several columns per
/// ciphertext: blocks of width w = next power of two >= m, G = n / w blocks.
struct OuterBlocking {
  std::size_t width = 1;
  std::size_t per_part = 1;

  static OuterBlocking for_rows(std::size_t rows, std::size_t n_slots) {
    OuterBlocking b;
    b.width = pow2_ceil(std::max<std::size_t>(rows, 1));
    if (b.width > n_slots) throw DimensionError("row count exceeds slot count");
    b.per_part = n_slots / b.width;
    return b;
  }
};

/// Packs a one-column-per-ciphertext outer matrix into G columns per
/// ciphertext (rotate each column into its block and add).
inline PackedMatrix pack_outer_blocks(const PackedMatrix& x, Context& ctx) {
  if (!x.encrypted() || x.encoding.kind != Layout::Outer) throw DimensionError("expected an encrypted outer matrix");
  const auto blocking = OuterBlocking::for_rows(x.rows(), ctx.n_slots());
  if (x.encoding.per_part == blocking.per_part && x.encoding.block_width == blocking.width) return x;
  if (x.encoding.per_part != 1) throw DimensionError("unsupported outer packing density");
  const std::size_t groups = ceil_div(x.cols(), blocking.per_part);
  std::vector<SlotCiphertext> parts;
  parts.reserve(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    SlotCiphertext acc = x.cipher()[g * blocking.per_part];
    for (std::size_t b = 1; b < blocking.per_part && g * blocking.per_part + b < x.cols(); ++b) {
      const auto& col = x.cipher()[g * blocking.per_part + b];
      acc = ctx.add(acc, ctx.rotate(col, -static_cast<std::int64_t>(b * blocking.width)));
    }
    parts.push_back(std::move(acc));
  }
  return {Encoding::outer_blocked(x.rows(), x.cols(), blocking.per_part, blocking.width), std::move(parts)};
}

/// Splits a blocked outer matrix back into one column per ciphertext
/// (one mask per column, one rotation per column not already at slot 0).
inline PackedMatrix unpack_outer_blocks(const PackedMatrix& x, Context& ctx) {
  if (!x.encrypted() || x.encoding.kind != Layout::Outer) throw DimensionError("expected an encrypted outer matrix");
  if (x.encoding.per_part == 1) return x;
  const auto& e = x.encoding;
  std::vector<SlotCiphertext> cols;
  cols.reserve(e.cols);
  for (std::size_t c = 0; c < e.cols; ++c) {
    const std::size_t b = c % e.per_part;
    auto masked = ctx.mult_plain(x.cipher()[c / e.per_part], range_mask(b * e.block_width, b * e.block_width + e.rows, ctx));
    if (b != 0) masked = ctx.rotate(masked, static_cast<std::int64_t>(b * e.block_width));
    cols.push_back(std::move(masked));
  }
  return {Encoding::outer(e.rows, e.cols), std::move(cols)};
}

namespace detail {

inline Matrix plain_weights(const PackedMatrix& w, Context& ctx) {
  if (w.encrypted()) throw DimensionError("weights must be plaintext");
  if (w.encoding.kind != Layout::Diagonal) throw DimensionError("weights must be diagonal-encoded");
  return decode(w, ctx);
}

}  // namespace detail

/// Outer-diagonal CPMM: Y = X * W for an encrypted outer-packed X (m x d1)
/// and diagonal-encoded plaintext W (d1 x d2).
///
/// X is packed G = n / w columns per ciphertext. For each input group the
/// packed ciphertext is rotated block-wise and multiplied by block-diagonals
/// of W, diagonal-major. When d2 <= G only pow2_ceil(d2) diagonals are needed
/// and the G / d2 partial sums are folded afterwards. Multiplications:
/// ceil(d1/G) * pow2_ceil(d2) (d2 <= G) or ceil(d1/G) * ceil(d2/G) * G.
///
/// The result is outer-packed with G columns per ciphertext; use
/// unpack_outer_blocks for one column per ciphertext.
inline PackedMatrix cpmm_outer_diagonal(const PackedMatrix& x, const PackedMatrix& w, Context& ctx) {
  if (!x.encrypted() || x.encoding.kind != Layout::Outer) throw DimensionError("CPMM input must be encrypted outer");
  if (x.cols() != w.rows()) throw DimensionError("CPMM shape mismatch: X is " + std::to_string(x.rows()) + "x" +
                                                 std::to_string(x.cols()) + ", W is " + std::to_string(w.rows()) +
                                                 "x" + std::to_string(w.cols()));
  const Matrix weights = detail::plain_weights(w, ctx);
  const std::size_t n = ctx.n_slots();
  const std::size_t m = x.rows();
  const std::size_t d1 = x.cols();
  const std::size_t d2 = w.cols();
  const PackedMatrix packed = pack_outer_blocks(x, ctx);
  const std::size_t bw = packed.encoding.block_width;
  const std::size_t groups_per_part = packed.encoding.per_part;  // G
  const bool folded = d2 <= groups_per_part;
  const std::size_t diagonals = folded ? pow2_ceil(d2) : groups_per_part;
  const std::size_t out_parts = folded ? 1 : ceil_div(d2, groups_per_part);

  std::vector<std::optional<SlotCiphertext>> acc(out_parts);
  for (std::size_t g = 0; g < packed.part_count(); ++g) {
    const auto& base = packed.cipher()[g];
    for (std::size_t k = 0; k < diagonals; ++k) {
      const SlotCiphertext rotated = k == 0 ? base : ctx.rotate(base, static_cast<std::int64_t>(k * bw));
      for (std::size_t o = 0; o < out_parts; ++o) {
        std::vector<Slot> diag(n, 0);
        for (std::size_t i = 0; i < groups_per_part; ++i) {
          const std::size_t j = g * groups_per_part + (i + k) % groups_per_part;
          const std::size_t c = folded ? i % diagonals : o * groups_per_part + i;
          if (j >= d1 || c >= d2) continue;
          for (std::size_t r = 0; r < m; ++r) diag[i * bw + r] = weights(j, c);
        }
        auto term = ctx.mult_plain(rotated, PlainVector(std::move(diag)));
        acc[o] = acc[o] ? ctx.add(*acc[o], term) : std::move(term);
      }
    }
  }

  std::vector<SlotCiphertext> parts;
  parts.reserve(out_parts);
  for (auto& a : acc) parts.push_back(std::move(*a));
  if (folded && groups_per_part > diagonals) {
    parts[0] = fold_stride(parts[0], diagonals * bw, groups_per_part / diagonals, ctx);
    parts[0] = ctx.mult_plain(parts[0], block_mask(d2, bw, m, ctx));
  }
  return {Encoding::outer_blocked(m, d2, groups_per_part, bw), std::move(parts)};
}

/// Inner-diagonal CPVM: y = x * W for one inner-packed token x (length d1 in
/// slots 0..d1-1, zero elsewhere) and diagonal-encoded plaintext W (d1 x d2).
///
/// With D = pow2_ceil(d1) and d2' = pow2_ceil(d2): x is tiled so rotations
/// wrap with period D, then min(D, d2') rotated copies are multiplied by the
/// generalized diagonals W[(i+k) mod D, i mod d2'] and accumulated; when
/// d2' < D the D/d2' partial sums are folded with log2(D/d2') rotations.
/// The cost does not depend on any prefix length. The result holds y in
/// slots 0..d2-1; remaining slots carry partial sums.
inline SlotCiphertext cpvm_inner_diagonal(const SlotCiphertext& x, const PackedMatrix& w, Context& ctx) {
  const std::size_t n = ctx.n_slots();
  const std::size_t d1 = w.rows();
  const std::size_t d2 = w.cols();
  const Matrix weights = detail::plain_weights(w, ctx);
  const std::size_t dd1 = pow2_ceil(d1);
  const std::size_t dd2 = pow2_ceil(d2);
  const std::size_t span = std::max(dd1, dd2);
  if (span > n) throw DimensionError("CPVM dimensions exceed slot count");
  const bool tall = dd2 <= dd1;

  const std::size_t copies = span < n ? 2 * span / dd1 : span / dd1;
  const SlotCiphertext tiled = tile_token(x, dd1, copies, ctx);

  const std::size_t diagonals = std::min(dd1, dd2);
  std::optional<SlotCiphertext> acc;
  for (std::size_t k = 0; k < diagonals; ++k) {
    std::vector<Slot> diag(n, 0);
    for (std::size_t i = 0; i < span; ++i) {
      const std::size_t row = (i + k) % dd1;
      const std::size_t col = tall ? i % dd2 : i;
      if (row < d1 && col < d2) diag[i] = weights(row, col);
    }
    const SlotCiphertext rotated = k == 0 ? tiled : ctx.rotate(tiled, static_cast<std::int64_t>(k));
    auto term = ctx.mult_plain(rotated, PlainVector(std::move(diag)));
    acc = acc ? ctx.add(*acc, term) : std::move(term);
  }
  if (tall && dd1 > dd2) return fold_stride(*acc, dd2, dd1 / dd2, ctx);
  return *acc;
}

}  // namespace cryptogen
