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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "cryptogen/backend.hpp"
#include "cryptogen/encodings.hpp"
#include "cryptogen/errors.hpp"
#include "cryptogen/fixed_point.hpp"
#include "cryptogen/kv_cache.hpp"
#include "cryptogen/linear_kernels.hpp"
#include "cryptogen/mpc.hpp"
#include "cryptogen/nonlinear.hpp"

namespace cryptogen {

enum class ScoreLayout { PrefillAligned, BlockAligned };

/// Encrypted scores. PrefillAligned: score r in slot r of parts[0].
/// BlockAligned: score r in slot (r mod per_part) * stride of
/// parts[r / per_part]. All other slots are zero.
struct ScoreVector {
  std::vector<SlotCiphertext> parts;
  std::size_t valid_len = 0;
  ScoreLayout layout = ScoreLayout::PrefillAligned;
  std::size_t stride = 1;
  std::size_t per_part = 0;

  std::pair<std::size_t, std::size_t> locate(std::size_t r) const {
    if (layout == ScoreLayout::PrefillAligned) return {0, r};
    return {r / per_part, (r % per_part) * stride};
  }
};

inline PlainVector one_hot(std::size_t j, const Context& ctx) { return range_mask(j, j + 1, ctx); }

/// Copies slot j of a into slots 0..width-1: one-hot mask, rotate slot j to
/// slot 0, then ceil(log2 width) rotate-and-add doublings. Rotations:
/// 1 + ceil(log2 width).
inline SlotCiphertext broadcast_slot(const SlotCiphertext& a, std::size_t j, std::size_t width, Context& ctx) {
  if (j >= ctx.n_slots()) throw DimensionError("broadcast slot index out of range");
  if (width == 0 || pow2_ceil(width) > ctx.n_slots()) throw DimensionError("broadcast width exceeds slot count");
  auto acc = ctx.rotate(ctx.mult_plain(a, one_hot(j, ctx)), static_cast<std::int64_t>(j));
  for (std::size_t w = 1; w < width; w *= 2) acc = ctx.add(acc, ctx.rotate(acc, -static_cast<std::int64_t>(w)));
  return acc;
}

/// Inner-inner mode: coeffs (slots 0..L-1) times the transpose of an
/// outer-packed basis (R x L, one column per ciphertext):
///   result = sum_j broadcast(coeffs[j]) * basis.column_j = coeffs * basis^T.
/// L ct x ct multiplications and L broadcasts of width `width` (R if 0).
inline ScoreVector arcc_inner_inner(const SlotCiphertext& coeffs, const PackedMatrix& basis, Context& ctx,
                                    std::size_t width = 0) {
  if (!basis.encrypted() || basis.encoding.kind != Layout::Outer || basis.encoding.per_part != 1) {
    throw DimensionError("inner-inner basis must be encrypted outer, one column per ciphertext");
  }
  const std::size_t cols = basis.cols();
  if (cols == 0 || basis.part_count() != cols) throw DimensionError("inner-inner basis has no columns");
  if (basis.rows() > ctx.n_slots()) throw DimensionError("inner-inner basis rows exceed slot count");
  if (width == 0) width = std::max<std::size_t>(basis.rows(), 1);
  std::optional<SlotCiphertext> acc;
  for (std::size_t j = 0; j < cols; ++j) {
    auto term = ctx.mult_cipher(broadcast_slot(coeffs, j, width, ctx), basis.cipher()[j]);
    acc = acc ? ctx.add(*acc, term) : std::move(term);
  }
  return {{std::move(*acc)}, basis.rows(), ScoreLayout::PrefillAligned, 1, basis.rows()};
}

/// Inner-outer mode: dot products of v (slots 0..d-1) with every row of an
/// encrypted Inner or InnerCompacted matrix. v is tiled across the B row
/// blocks of a ciphertext, multiplied once per ciphertext, and folded with
/// log2(width) rotations (width = block width unless overridden), then the
/// block heads are masked. Score r lands in slot (r mod B) * w of part r / B.
inline ScoreVector arcc_inner_outer(const SlotCiphertext& v, const PackedMatrix& rows, Context& ctx,
                                    std::size_t fold_width = 0) {
  if (!rows.encrypted()) throw DimensionError("inner-outer rows must be encrypted");
  std::size_t per_part = 1;
  std::size_t width = pow2_ceil(rows.cols());
  if (rows.encoding.kind == Layout::InnerCompacted) {
    per_part = rows.encoding.per_part;
    width = rows.encoding.block_width;
  } else if (rows.encoding.kind != Layout::Inner) {
    throw DimensionError("inner-outer rows must be inner or inner-compacted");
  }
  if (width > ctx.n_slots()) throw DimensionError("row width exceeds slot count");
  if (fold_width == 0) fold_width = width;
  if (fold_width < width || !is_pow2(fold_width) || (fold_width > width && per_part > 1)) {
    throw DimensionError("fold width must be a power of two covering one row block");
  }
  const std::size_t total = rows.rows();
  if (rows.part_count() != ceil_div(total, per_part)) throw DimensionError("inner-outer rows have wrong part count");
  const auto tiled = per_part > 1 ? tile_token(v, width, per_part, ctx) : v;
  ScoreVector out{{}, total, ScoreLayout::BlockAligned, width, per_part};
  for (std::size_t c = 0; c < rows.part_count(); ++c) {
    const std::size_t in_part = std::min(per_part, total - c * per_part);
    auto folded = fold_sum(ctx.mult_cipher(tiled, rows.cipher()[c]), fold_width, ctx);
    out.parts.push_back(ctx.mult_plain(folded, block_mask(in_part, width, 1, ctx)));
  }
  return out;
}

/// Moves block-aligned scores into slots 0..valid_len-1 of one ciphertext:
/// per score one mask and (unless already in place) one rotation.
inline ScoreVector compact_scores(const ScoreVector& s, Context& ctx) {
  if (s.layout == ScoreLayout::PrefillAligned) return s;
  if (s.valid_len > ctx.n_slots()) throw DimensionError("too many scores for one ciphertext");
  std::optional<SlotCiphertext> acc;
  for (std::size_t r = 0; r < s.valid_len; ++r) {
    const auto [part, slot] = s.locate(r);
    auto picked = ctx.mult_plain(s.parts[part], one_hot(slot, ctx));
    if (slot != r) picked = ctx.rotate(picked, static_cast<std::int64_t>(slot) - static_cast<std::int64_t>(r));
    acc = acc ? ctx.add(*acc, picked) : std::move(picked);
  }
  return {{std::move(*acc)}, s.valid_len, ScoreLayout::PrefillAligned, 1, s.valid_len};
}

/// Opens a score vector into shares of its valid_len scores, in order.
/// One conversion per ciphertext; the slot gather is local to each role.
inline SharePair scores_to_shares(const ScoreVector& s, Context& ctx, MpcChannel& ch) {
  SharePair out;
  std::vector<SharePair> opened;
  opened.reserve(s.parts.size());
  for (const auto& part : s.parts) opened.push_back(he_to_shares(part, ctx, ch));
  for (std::size_t r = 0; r < s.valid_len; ++r) {
    const auto [part, slot] = s.locate(r);
    out.client.push_back(opened[part].client[slot]);
    out.server.push_back(opened[part].server[slot]);
  }
  return out;
}

/// Scores at scale 2f -> scale f, times 1/sqrt(d2).
template <class D>
protocols::Value<D> scale_scores(D& d, const protocols::Value<D>& s, std::size_t d2, const FixedPointParams& fp) {
  const auto inv_sqrt = FixedPointParams::quantize(1.0 / std::sqrt(static_cast<double>(d2)), fp.f);
  return d.trunc(d.mul_const(d.trunc(s, fp.f), inv_sqrt), fp.f);
}

/// Prefill attention over outer-packed Q, K, V (m x d2, one column per
/// ciphertext, scale f):
///   column r of S = sum_j Q_j * broadcast(K_j[r])        (outer-outer)
///   row-wise causal softmax of S / sqrt(d2) in the share domain
///   column c of O = sum_r A_r * broadcast(V_c[r])
/// Returns O (outer, scale f) with fresh ciphertexts.
inline PackedMatrix prefill_attention(const PackedMatrix& q, const PackedMatrix& k, const PackedMatrix& v,
                                      const FixedPointParams& fp, Context& ctx, MpcChannel& ch,
                                      const NonlinearConfig& cfg = {}) {
  for (const auto* x : {&q, &k, &v}) {
    if (!x->encrypted() || x->encoding.kind != Layout::Outer || x->encoding.per_part != 1) {
      throw DimensionError("prefill attention operands must be encrypted outer, one column per ciphertext");
    }
  }
  const std::size_t m = q.rows();
  const std::size_t d2 = q.cols();
  if (k.rows() != m || v.rows() != m || k.cols() != d2 || v.cols() != d2) {
    throw DimensionError("prefill attention shape mismatch");
  }
  if (m == 0 || m > ctx.n_slots()) throw DimensionError("prefill length must be in [1, n_slots]");

  // Scores, one ciphertext per key position r (slots index queries).
  std::vector<SharePair> score_cols;
  for (std::size_t r = 0; r < m; ++r) {
    std::optional<SlotCiphertext> acc;
    for (std::size_t j = 0; j < d2; ++j) {
      auto term = ctx.mult_cipher(q.cipher()[j], broadcast_slot(k.cipher()[j], r, m, ctx));
      acc = acc ? ctx.add(*acc, term) : std::move(term);
    }
    score_cols.push_back(he_to_shares(*acc, ctx, ch, m));
  }

  // Row softmax with the causal mask, in the share domain.
  ShareDomain d(ch);
  const auto mask = causal_mask_constant(fp);
  std::vector<SharePair> weights(m);
  for (std::size_t i = 0; i < m; ++i) {
    SharePair row;
    std::vector<std::int64_t> bias(m, 0);
    for (std::size_t r = 0; r < m; ++r) {
      row.client.push_back(score_cols[r].client[i]);
      row.server.push_back(score_cols[r].server[i]);
      if (r > i) bias[r] = mask;
    }
    weights[i] = protocols::softmax(d, d.add_const(scale_scores(d, row, d2, fp), bias), fp, cfg);
  }

  // Attention weights back under HE, one ciphertext per key position.
  std::vector<SlotCiphertext> a_cols;
  for (std::size_t r = 0; r < m; ++r) {
    SharePair col;
    for (std::size_t i = 0; i < m; ++i) {
      col.client.push_back(weights[i].client[r]);
      col.server.push_back(weights[i].server[r]);
    }
    a_cols.push_back(shares_to_he(col, ctx, ch));
  }

  std::vector<SlotCiphertext> out;
  for (std::size_t c = 0; c < d2; ++c) {
    std::optional<SlotCiphertext> acc;
    for (std::size_t r = 0; r < m; ++r) {
      auto term = ctx.mult_cipher(a_cols[r], broadcast_slot(v.cipher()[c], r, m, ctx));
      acc = acc ? ctx.add(*acc, term) : std::move(term);
    }
    auto shares = he_to_shares(*acc, ctx, ch, m);
    out.push_back(shares_to_he(protocols::rescale(d, shares, fp), ctx, ch));
  }
  return {Encoding::outer(m, d2), std::move(out)};
}

/// One decode-step attention for a single head, returning shares of the
/// output row (length d2, scale f).
///   s_prefill = q K_prefill^T      inner-inner, broadcast width n
///   s_auto    = q K_auto^T         inner-outer over the compacted segment
///   a = softmax([s_prefill | s_auto] / sqrt(d2)) in the share domain
///   o_prefill = a_prefill V_prefill  inner-outer over V_prefill^T, fold n
///   o_auto    = a_auto V_auto      the client lays each weight over its
///                                  token's block; one ct x ct multiply per
///                                  cache ciphertext, then a fold over blocks
/// Every HE count is a function of (n, d2, t_auto) only; none depends on m.
inline SharePair attention_step_shares(const SlotCiphertext& q, const KVCache& cache, const FixedPointParams& fp,
                                       Context& ctx, MpcChannel& ch, const NonlinearConfig& cfg = {}) {
  const std::size_t m = cache.m;
  const std::size_t t = cache.t_auto;
  const std::size_t d2 = cache.d2;
  const std::size_t n = ctx.n_slots();
  if (m + t == 0) throw DimensionError("attention over an empty cache");

  ShareDomain d(ch);
  SharePair scores;
  if (m > 0) scores = scores_to_shares(arcc_inner_inner(q, cache.prefill_k_matrix(), ctx, n), ctx, ch);
  if (t > 0) {
    scores = ShareDomain::concat(std::move(scores),
                                 scores_to_shares(arcc_inner_outer(q, cache.auto_k_matrix(), ctx), ctx, ch));
  }
  const auto weights = protocols::softmax(d, scale_scores(d, scores, d2, fp), fp, cfg);

  std::optional<SlotCiphertext> out;
  if (m > 0) {
    const auto a_pref = shares_to_he(ShareDomain::slice(weights, 0, m), ctx, ch);
    const PackedMatrix v_cols{Encoding::inner(d2, m), cache.prefill_v};
    out = compact_scores(arcc_inner_outer(a_pref, v_cols, ctx, n), ctx).parts[0];
  }
  if (t > 0) {
    const std::size_t w = cache.block_width;
    std::optional<SlotCiphertext> acc;
    for (std::size_t c = 0; c < cache.auto_k.size(); ++c) {
      SharePair spread{std::vector<Slot>(n, 0), std::vector<Slot>(n, 0)};
      for (std::size_t b = 0; b < cache.block && c * cache.block + b < t; ++b) {
        const std::size_t src = m + c * cache.block + b;
        for (std::size_t i = 0; i < d2; ++i) {
          spread.client[b * w + i] = weights.client[src];
          spread.server[b * w + i] = weights.server[src];
        }
      }
      auto term = ctx.mult_cipher(shares_to_he(spread, ctx, ch), cache.auto_v[c]);
      acc = acc ? ctx.add(*acc, term) : std::move(term);
    }
    auto folded = ctx.mult_plain(fold_stride(*acc, w, cache.block, ctx), range_mask(0, d2, ctx));
    out = out ? ctx.add(*out, folded) : std::move(folded);
  }
  return protocols::rescale(d, he_to_shares(*out, ctx, ch, d2), fp);
}

/// attention_step_shares re-encrypted: inner, slots 0..d2-1, scale f.
inline SlotCiphertext attention_step(const SlotCiphertext& q, const KVCache& cache, const FixedPointParams& fp,
                                     Context& ctx, MpcChannel& ch, const NonlinearConfig& cfg = {}) {
  return shares_to_he(attention_step_shares(q, cache, fp, ctx, ch, cfg), ctx, ch);
}

/// Plaintext fixed-point reference for one attention row: q (d2) against
/// keys/values (t x d2) over Z_p, identical arithmetic to attention_step.
inline std::vector<Slot> plain_attention_row(const std::vector<Slot>& q, const Matrix& keys, const Matrix& values,
                                             const FixedPointParams& fp, const NonlinearConfig& cfg = {}) {
  PlainDomain d(fp.p);
  const auto scores = vecmat_mod(q, keys.transpose(), fp.p);
  const auto weights = protocols::softmax(d, scale_scores(d, scores, keys.cols(), fp), fp, cfg);
  return protocols::rescale(d, vecmat_mod(weights, values, fp.p), fp);
}

/// Plaintext fixed-point reference for causal prefill attention (m x d2).
inline Matrix plain_prefill_attention(const Matrix& q, const Matrix& k, const Matrix& v, const FixedPointParams& fp,
                                      const NonlinearConfig& cfg = {}) {
  PlainDomain d(fp.p);
  const std::size_t m = q.rows();
  const Matrix scores = multiply_mod(q, k.transpose(), fp.p);
  const auto mask = causal_mask_constant(fp);
  Matrix weights(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<Slot> row(scores.row(i).begin(), scores.row(i).end());
    std::vector<std::int64_t> bias(m, 0);
    for (std::size_t r = i + 1; r < m; ++r) bias[r] = mask;
    const auto w = protocols::softmax(d, d.add_const(scale_scores(d, row, q.cols(), fp), bias), fp, cfg);
    std::copy(w.begin(), w.end(), weights.row(i).begin());
  }
  Matrix out = multiply_mod(weights, v, fp.p);
  for (auto& x : out.data()) x = zp::from_signed(PlainDomain::floor_shift(zp::to_signed(x, fp.p), fp.f), fp.p);
  return out;
}

}  // namespace cryptogen
