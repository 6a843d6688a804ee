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
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cryptogen/backend.hpp"
#include "cryptogen/errors.hpp"
#include "cryptogen/matrix.hpp"

namespace cryptogen {

enum class Layout { Outer, Inner, Diagonal, InnerCompacted };

inline std::string_view to_string(Layout l) {
  switch (l) {
    case Layout::Outer: return "outer";
    case Layout::Inner: return "inner";
    case Layout::Diagonal: return "diagonal";
    case Layout::InnerCompacted: return "inner_compacted";
  }
  return "?";
}

inline Layout layout_from_string(std::string_view s) {
  if (s == "outer") return Layout::Outer;
  if (s == "inner") return Layout::Inner;
  if (s == "diagonal") return Layout::Diagonal;
  if (s == "inner_compacted") return Layout::InnerCompacted;
  throw FormatError("unknown layout '" + std::string(s) + "'");
}

/// How an m x d matrix is laid out over a list of slot vectors.
///
///   Outer           part j holds column j in slots 0..m-1. With per_part = G > 1,
///                   part g holds columns gG..gG+G-1, column gG+b starting at slot
///                   b * block_width.
///   Inner           part i holds row i in slots 0..d-1.
///   Diagonal        part k holds A[i, (i+k) mod d] at slot i, for i < m.
///   InnerCompacted  part c holds rows cB..cB+B-1, row cB+b starting at slot
///                   b * block_width (block_width = next power of two >= d).
struct Encoding {
  Layout kind = Layout::Outer;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t per_part = 1;
  std::size_t block_width = 0;

  static Encoding outer(std::size_t rows, std::size_t cols) { return {Layout::Outer, rows, cols, 1, 0}; }

  /// Outer layout with several columns per ciphertext, blocks of width w.
  static Encoding outer_blocked(std::size_t rows, std::size_t cols, std::size_t columns_per_part,
                                std::size_t w) {
    return {Layout::Outer, rows, cols, columns_per_part, w};
  }

  static Encoding inner(std::size_t rows, std::size_t cols) { return {Layout::Inner, rows, cols, 1, 0}; }

  static Encoding diagonal(std::size_t rows, std::size_t cols) { return {Layout::Diagonal, rows, cols, 1, 0}; }

  /// B = n / w rows per ciphertext with w = next power of two >= cols; for
  /// power-of-two cols this is ceil(n / cols).
  static Encoding inner_compacted(std::size_t rows, std::size_t cols, std::size_t n_slots) {
    const std::size_t w = pow2_ceil(cols);
    if (w > n_slots) throw DimensionError("row width exceeds slot count");
    return {Layout::InnerCompacted, rows, cols, n_slots / w, w};
  }

  std::size_t part_count() const {
    switch (kind) {
      case Layout::Outer: return ceil_div(cols, per_part);
      case Layout::Inner: return rows;
      case Layout::Diagonal: return cols;
      case Layout::InnerCompacted: return ceil_div(rows, per_part);
    }
    return 0;
  }

  /// Slot holding element (i, j), with the index of the part that holds it.
  /// Not defined for Diagonal.
  std::pair<std::size_t, std::size_t> locate(std::size_t i, std::size_t j) const {
    switch (kind) {
      case Layout::Outer:
        return per_part == 1 ? std::pair{j, i} : std::pair{j / per_part, (j % per_part) * block_width + i};
      case Layout::Inner: return {i, j};
      case Layout::InnerCompacted: return {i / per_part, (i % per_part) * block_width + j};
      case Layout::Diagonal: break;
    }
    throw Error("locate() is not defined for diagonal encodings");
  }

  void check_fits(std::size_t n_slots) const {
    auto fail = [&](const std::string& what) {
      throw DimensionError(std::string(to_string(kind)) + " encoding of " + std::to_string(rows) + "x" +
                           std::to_string(cols) + ": " + what + " exceeds " + std::to_string(n_slots) +
                           " slots");
    };
    switch (kind) {
      case Layout::Outer:
        if (rows > n_slots) fail("row count");
        if (per_part > 1 && (block_width < rows || per_part * block_width > n_slots)) fail("column blocks");
        break;
      case Layout::Inner:
        if (cols > n_slots) fail("row length");
        break;
      case Layout::Diagonal:
        if (rows > n_slots || cols > n_slots) fail("diagonal length");
        break;
      case Layout::InnerCompacted:
        if (block_width < cols || per_part == 0 || per_part * block_width > n_slots) fail("row blocks");
        break;
    }
  }

  friend bool operator==(const Encoding&, const Encoding&) = default;
};

/// A matrix materialized as ciphertexts (encrypted) or plaintext slot vectors.
struct PackedMatrix {
  Encoding encoding;
  std::variant<std::vector<SlotCiphertext>, std::vector<PlainVector>> parts;

  bool encrypted() const { return std::holds_alternative<std::vector<SlotCiphertext>>(parts); }
  const std::vector<SlotCiphertext>& cipher() const { return std::get<std::vector<SlotCiphertext>>(parts); }
  std::vector<SlotCiphertext>& cipher() { return std::get<std::vector<SlotCiphertext>>(parts); }
  const std::vector<PlainVector>& plain() const { return std::get<std::vector<PlainVector>>(parts); }
  std::size_t part_count() const { return encrypted() ? cipher().size() : plain().size(); }
  std::size_t rows() const { return encoding.rows; }
  std::size_t cols() const { return encoding.cols; }
};

namespace detail {

inline std::vector<std::vector<Slot>> layout_slots(const Matrix& a, const Encoding& e, std::size_t n) {
  std::vector<std::vector<Slot>> parts(e.part_count(), std::vector<Slot>(n, 0));
  if (e.kind == Layout::Diagonal) {
    for (std::size_t k = 0; k < e.cols; ++k)
      for (std::size_t i = 0; i < e.rows; ++i) parts[k][i] = a(i, (i + k) % e.cols);
    return parts;
  }
  for (std::size_t i = 0; i < e.rows; ++i) {
    for (std::size_t j = 0; j < e.cols; ++j) {
      const auto [part, slot] = e.locate(i, j);
      parts[part][slot] = a(i, j);
    }
  }
  return parts;
}

inline Matrix unlayout_slots(const std::vector<std::vector<Slot>>& parts, const Encoding& e) {
  Matrix a(e.rows, e.cols);
  if (e.kind == Layout::Diagonal) {
    for (std::size_t k = 0; k < e.cols; ++k)
      for (std::size_t i = 0; i < e.rows; ++i) a(i, (i + k) % e.cols) = parts[k][i];
    return a;
  }
  for (std::size_t i = 0; i < e.rows; ++i) {
    for (std::size_t j = 0; j < e.cols; ++j) {
      const auto [part, slot] = e.locate(i, j);
      a(i, j) = parts[part][slot];
    }
  }
  return a;
}

}  // namespace detail

/// Lays A out under `encoding`; unused slots are zero.
inline PackedMatrix encode(const Matrix& a, const Encoding& encoding, Context& ctx, bool encrypted) {
  if (a.rows() != encoding.rows || a.cols() != encoding.cols) {
    throw DimensionError("matrix shape does not match its encoding");
  }
  encoding.check_fits(ctx.n_slots());
  auto slots = detail::layout_slots(a, encoding, ctx.n_slots());
  const Slot p = ctx.modulus();
  if (encrypted) {
    std::vector<SlotCiphertext> parts;
    parts.reserve(slots.size());
    for (auto& s : slots) parts.push_back(ctx.encrypt(ctx.plain(std::move(s))));
    return {encoding, std::move(parts)};
  }
  std::vector<PlainVector> parts;
  parts.reserve(slots.size());
  for (auto& s : slots) {
    for (auto& v : s) v %= p;
    parts.emplace_back(std::move(s));
  }
  return {encoding, std::move(parts)};
}

/// Layout with default parameters for `kind` (one column per part for Outer,
/// B = n / pow2_ceil(d) for InnerCompacted).
inline PackedMatrix encode(const Matrix& a, Layout kind, Context& ctx, bool encrypted) {
  Encoding e{kind, a.rows(), a.cols(), 1, 0};
  if (kind == Layout::InnerCompacted) e = Encoding::inner_compacted(a.rows(), a.cols(), ctx.n_slots());
  return encode(a, e, ctx, encrypted);
}

/// Inverse of encode. Decrypts every part of an encrypted matrix.
inline Matrix decode(const PackedMatrix& packed, Context& ctx) {
  std::vector<std::vector<Slot>> slots;
  slots.reserve(packed.part_count());
  if (packed.encrypted()) {
    for (const auto& ct : packed.cipher()) slots.push_back(ctx.decrypt(ct).values());
  } else {
    for (const auto& pv : packed.plain()) slots.push_back(pv.values());
  }
  if (slots.size() != packed.encoding.part_count()) throw DimensionError("packed matrix has wrong part count");
  return detail::unlayout_slots(slots, packed.encoding);
}

/// Encrypts one token row x into slots 0..d-1.
inline SlotCiphertext pack_token_inner(std::span<const Slot> x, Context& ctx) {
  if (x.size() > ctx.n_slots()) throw DimensionError("token dimension exceeds slot count");
  return ctx.encrypt(ctx.plain(std::vector<Slot>(x.begin(), x.end())));
}

/// Replicates the d-wide vector in slots 0..d-1 into `blocks` consecutive
/// blocks of width `stride` using ceil(log2 blocks) rotate-and-add steps.
/// When blocks is not a power of two, the last doubling may also fill blocks
/// past the requested count.
inline SlotCiphertext tile_token(const SlotCiphertext& x, std::size_t stride, std::size_t blocks, Context& ctx) {
  const std::size_t filled = pow2_ceil(blocks);
  if (stride == 0 || blocks == 0 || filled * stride > ctx.n_slots()) {
    throw DimensionError("tile_token: " + std::to_string(blocks) + " blocks of width " + std::to_string(stride) +
                         " do not fit " + std::to_string(ctx.n_slots()) + " slots");
  }
  SlotCiphertext acc = x;
  for (std::size_t width = 1; width < blocks; width *= 2) {
    acc = ctx.add(acc, ctx.rotate(acc, -static_cast<std::int64_t>(width * stride)));
  }
  return acc;
}

}  // namespace cryptogen
