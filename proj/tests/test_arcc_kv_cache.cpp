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

#include <gtest/gtest.h>

#include "cryptogen/arcc.hpp"
#include "cryptogen/kv_cache.hpp"
#include "support.hpp"

using namespace cryptogen;
using testing_support::naive_matmul;
using testing_support::random_matrix;

namespace {

// Fixed-point matrix with entries drawn from [-range, range].
Matrix fixed_matrix(Prng& rng, std::size_t r, std::size_t c, const FixedPointParams& fp, double range = 2.0) {
  Matrix out(r, c);
  for (auto& x : out.data()) x = fp.encode(range * (2.0 * rng.unit() - 1.0));
  return out;
}

std::vector<Slot> row_of(const Matrix& a, std::size_t i) { return {a.row(i).begin(), a.row(i).end()}; }

std::vector<Slot> slots_of(Context& ctx, const SlotCiphertext& ct) { return ctx.decrypt(ct).values(); }

}  // namespace

TEST(Arcc, BroadcastSlot) {
  Context ctx(BackendParams::with_slots(32, 1));
  Prng rng(1);
  const auto v = rng.uniform_vector(32, ctx.modulus());
  const auto ct = ctx.encrypt(ctx.plain(v));
  for (std::size_t width : {1U, 3U, 8U, 32U}) {
    const auto before = ctx.counters();
    const auto out = slots_of(ctx, broadcast_slot(ct, 5, width, ctx));
    EXPECT_EQ((ctx.counters() - before).rotate, 1 + ceil_log2(width));
    for (std::size_t i = 0; i < width; ++i) EXPECT_EQ(out[i], v[5]) << i;
  }
}

TEST(Arcc, InnerInnerMatchesNaive) {
  Prng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Context ctx(BackendParams::with_slots(32, trial));
    const std::size_t rows = 1 + rng.uniform(32), cols = 1 + rng.uniform(8);
    const Matrix basis = random_matrix(rng, rows, cols, ctx.modulus());
    const auto coeffs = rng.uniform_vector(cols, ctx.modulus());
    const auto s = arcc_inner_inner(ctx.encrypt(ctx.plain(coeffs)), encode(basis, Layout::Outer, ctx, true), ctx);
    Matrix c(1, cols, coeffs);
    const Matrix expect = naive_matmul(c, testing_support::transpose(basis), ctx.modulus());
    const auto got = slots_of(ctx, s.parts[0]);
    for (std::size_t r = 0; r < rows; ++r) EXPECT_EQ(got[r], expect(0, r));
  }
}

TEST(Arcc, InnerOuterMatchesNaive) {
  Prng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Context ctx(BackendParams::with_slots(64, trial));
    const std::size_t d = 1 + rng.uniform(16), rows = 1 + rng.uniform(40);
    const Matrix keys = random_matrix(rng, rows, d, ctx.modulus());
    const auto q = rng.uniform_vector(d, ctx.modulus());
    const auto qct = pack_token_inner(q, ctx);
    const Matrix expect = naive_matmul(Matrix(1, d, q), testing_support::transpose(keys), ctx.modulus());
    const auto packed = encode(keys, Encoding::inner_compacted(rows, d, ctx.n_slots()), ctx, true);
    const auto s = arcc_inner_outer(qct, packed, ctx);
    EXPECT_EQ(s.parts.size(), ceil_div(rows, packed.encoding.per_part));
    for (std::size_t r = 0; r < rows; ++r) {
      const auto [part, slot] = s.locate(r);
      EXPECT_EQ(slots_of(ctx, s.parts[part])[slot], expect(0, r));
    }
    const auto compact = slots_of(ctx, compact_scores(s, ctx).parts[0]);
    for (std::size_t r = 0; r < rows; ++r) EXPECT_EQ(compact[r], expect(0, r));
    for (std::size_t r = rows; r < ctx.n_slots(); ++r) EXPECT_EQ(compact[r], 0U);
  }
}

TEST(Arcc, PrefillAttentionMatchesPlain) {
  Prng rng(4);
  for (int trial = 0; trial < 6; ++trial) {
    Context ctx(BackendParams::with_slots(64, trial));
    const FixedPointParams fp(8, ctx.modulus());
    MpcChannel ch(ctx.modulus(), trial, &ctx);
    const std::size_t m = 1 + rng.uniform(12), d2 = 1 + rng.uniform(8);
    const Matrix q = fixed_matrix(rng, m, d2, fp), k = fixed_matrix(rng, m, d2, fp), v = fixed_matrix(rng, m, d2, fp);
    const auto out = prefill_attention(encode(q, Layout::Outer, ctx, true), encode(k, Layout::Outer, ctx, true),
                                       encode(v, Layout::Outer, ctx, true), fp, ctx, ch);
    EXPECT_EQ(decode(out, ctx), plain_prefill_attention(q, k, v, fp)) << "m=" << m << " d2=" << d2;
  }
}

TEST(Arcc, AttentionStepMatchesPlainRow) {
  Prng rng(5);
  for (int trial = 0; trial < 8; ++trial) {
    Context ctx(BackendParams::with_slots(64, trial));
    const FixedPointParams fp(8, ctx.modulus());
    MpcChannel ch(ctx.modulus(), 100 + trial, &ctx);
    const std::size_t d2 = std::size_t{1} << rng.uniform(4);
    const std::size_t m = rng.uniform(10), t = (m == 0 ? 1 : 0) + rng.uniform(20);
    const Matrix keys = fixed_matrix(rng, m + t, d2, fp), values = fixed_matrix(rng, m + t, d2, fp);
    KVCache cache = m > 0 ? init_cache(encode(keys.row_range(0, m), Layout::Outer, ctx, true),
                                       encode(values.row_range(0, m), Layout::Outer, ctx, true), ctx)
                          : init_cache(d2, ctx);
    for (std::size_t i = m; i < m + t; ++i) {
      cache = append_token(cache, pack_token_inner(row_of(keys, i), ctx), pack_token_inner(row_of(values, i), ctx), ctx);
    }
    const Matrix q = fixed_matrix(rng, 1, d2, fp);
    const auto got = attention_step_shares(pack_token_inner(row_of(q, 0), ctx), cache, fp, ctx, ch);
    EXPECT_EQ(got.reconstruct(ctx.modulus()), plain_attention_row(row_of(q, 0), keys, values, fp))
        << "m=" << m << " t=" << t << " d2=" << d2;
  }
}

TEST(Arcc, AttentionStepCountsIgnorePrefixLength) {
  // Same t_auto, different prefill lengths: identical HE operation counts.
  Prng rng(6);
  std::optional<OpCounter> first;
  for (std::size_t m : {2U, 7U, 30U}) {
    Context ctx(BackendParams::with_slots(64, 1));
    const FixedPointParams fp(8, ctx.modulus());
    MpcChannel ch(ctx.modulus(), 1, &ctx);
    const Matrix k = fixed_matrix(rng, m, 8, fp), v = fixed_matrix(rng, m, 8, fp);
    KVCache cache = init_cache(encode(k, Layout::Outer, ctx, true), encode(v, Layout::Outer, ctx, true), ctx);
    for (int i = 0; i < 5; ++i) {
      const Matrix kv = fixed_matrix(rng, 2, 8, fp);
      cache = append_token(cache, pack_token_inner(row_of(kv, 0), ctx), pack_token_inner(row_of(kv, 1), ctx), ctx);
    }
    const auto before = ctx.counters();
    (void)attention_step_shares(pack_token_inner(row_of(fixed_matrix(rng, 1, 8, fp), 0), ctx), cache, fp, ctx, ch);
    auto delta = ctx.counters() - before;
    delta.mpc_bytes = 0;
    if (!first) first = delta;
    EXPECT_EQ(delta, *first) << "m=" << m;
  }
}

TEST(KvCache, CompactionLaw) {
  for (std::size_t n : {32U, 64U}) {
    for (std::size_t d2 : {1U, 3U, 4U, 8U, 16U}) {
      Context ctx(BackendParams::with_slots(n, 1));
      const std::size_t b = n / pow2_ceil(d2);
      KVCache cache = init_cache(d2, ctx);
      EXPECT_EQ(cache.block, b);
      const auto zero = pack_token_inner(std::vector<Slot>(d2, 1), ctx);
      for (std::size_t t = 1; t <= 3 * b + 1; ++t) {
        cache = append_token(cache, zero, zero, ctx);
        const auto s = cache_stats(cache, ctx);
        EXPECT_EQ(s.auto_ct_count, ceil_div(t, b)) << "n=" << n << " d2=" << d2 << " t=" << t;
        EXPECT_EQ(s.ct_count, 2 * ceil_div(t, b));
      }
    }
  }
}

TEST(KvCache, AppendThenDecode) {
  Prng rng(7);
  Context ctx(BackendParams::with_slots(64, 2));
  const Matrix k = random_matrix(rng, 23, 6, ctx.modulus()), v = random_matrix(rng, 23, 6, ctx.modulus());
  KVCache cache = init_cache(6, ctx);
  for (std::size_t i = 0; i < k.rows(); ++i) {
    const KVCache before = cache;
    cache = append_token(cache, pack_token_inner(row_of(k, i), ctx), pack_token_inner(row_of(v, i), ctx), ctx);
    // Caches are values: the old one still decodes to its own rows.
    EXPECT_EQ(decode_auto_k(before, ctx), k.row_range(0, i));
  }
  EXPECT_EQ(decode_auto_k(cache, ctx), k);
  EXPECT_EQ(decode_auto_v(cache, ctx), v);
}

TEST(KvCache, InitValidation) {
  Context ctx(BackendParams::with_slots(16, 1));
  Prng rng(8);
  const auto k = encode(random_matrix(rng, 4, 3, ctx.modulus()), Layout::Outer, ctx, true);
  const auto v2 = encode(random_matrix(rng, 5, 3, ctx.modulus()), Layout::Outer, ctx, true);
  EXPECT_THROW(init_cache(k, v2, ctx), DimensionError);
  EXPECT_THROW(init_cache(0, ctx), DimensionError);
  const auto inner = encode(random_matrix(rng, 4, 3, ctx.modulus()), Layout::Inner, ctx, true);
  EXPECT_THROW(init_cache(inner, inner, ctx), DimensionError);
}

TEST(KvCache, RefreshIsTransparent) {
  Prng rng(9);
  Context ctx(BackendParams::with_slots(64, 3));
  MpcChannel ch(ctx.modulus(), 3, &ctx);
  const Matrix pk = random_matrix(rng, 5, 4, ctx.modulus()), pv = random_matrix(rng, 5, 4, ctx.modulus());
  KVCache cache = init_cache(encode(pk, Layout::Outer, ctx, true), encode(pv, Layout::Outer, ctx, true), ctx);
  const Matrix k = random_matrix(rng, 20, 4, ctx.modulus());
  for (std::size_t i = 0; i < k.rows(); ++i) {
    cache = append_token(cache, pack_token_inner(row_of(k, i), ctx), pack_token_inner(row_of(k, i), ctx), ctx);
  }
  RefreshView view;
  const auto before = ctx.counters();
  const KVCache fresh = force_refresh(cache, ctx, ch, 4, &view);
  const auto delta = ctx.counters() - before;
  const std::size_t parts = cache_stats(cache, ctx).ct_count;
  EXPECT_EQ(fresh.refresh_log.size(), parts);
  EXPECT_EQ(view.size(), parts);
  EXPECT_EQ(delta.refresh_events, parts);
  EXPECT_EQ(delta.mpc_bytes, parts * 2 * ctx.n_slots() * ceil_log2(ctx.modulus()) / 8);
  EXPECT_EQ(decode_auto_k(fresh, ctx), k);
  EXPECT_EQ(decode(fresh.prefill_k_matrix(), ctx), pk);
  EXPECT_EQ(decode(fresh.prefill_v_matrix(), ctx), pv);
  for (const auto* list : {&fresh.prefill_k, &fresh.auto_k, &fresh.auto_v}) {
    for (const auto& ct : *list) EXPECT_EQ(ct.noise_budget(), ctx.params().initial_noise_budget);
  }
  for (const auto& e : fresh.refresh_log) {
    EXPECT_TRUE(e.forced);
    EXPECT_EQ(e.step, 4U);
  }
  // Healthy caches are left alone.
  EXPECT_TRUE(maybe_refresh(fresh, ctx, ch).refresh_log.size() == fresh.refresh_log.size());
}

TEST(KvCache, LazyRefreshFollowsThreshold) {
  // Oracle: simulate each generated-segment ciphertext's budget. A new
  // ciphertext starts fresh; a write at block 0 costs one plaintext
  // multiply, any other block a rotation plus a multiply; refresh restores
  // the initial budget whenever it is at or below the threshold.
  for (int threshold : {60, 167, 168, 169, 175}) {
    auto params = BackendParams::with_slots(32, 1);
    params.refresh_threshold = threshold;
    Context ctx(params);
    MpcChannel ch(ctx.modulus(), 1, &ctx);
    const auto& nc = params.noise_costs;
    const int fresh = params.initial_noise_budget;
    KVCache cache = init_cache(8, ctx);
    const auto tok = pack_token_inner(std::vector<Slot>(8, 3), ctx);
    std::vector<int> model;
    std::size_t expected_events = 0;
    for (std::size_t t = 0; t < 30; ++t) {
      const std::size_t blk = t % cache.block;
      if (blk == 0) model.push_back(fresh);
      const int written = fresh - nc.mult_plain - (blk == 0 ? 0 : nc.rotate);
      model.back() = std::min(model.back(), written);
      cache = append_token(cache, tok, tok, ctx);
      cache = maybe_refresh(cache, ctx, ch, t);
      for (auto& b : model) {
        if (b <= threshold) {
          b = fresh;
          expected_events += 2;  // K and V
        }
      }
      ASSERT_EQ(cache.refresh_log.size(), expected_events) << "threshold " << threshold << " t " << t;
      for (std::size_t i = 0; i < model.size(); ++i) EXPECT_EQ(cache.auto_k[i].noise_budget(), model[i]);
    }
    EXPECT_EQ(decode_auto_k(cache, ctx), Matrix(30, 8, std::vector<Slot>(240, 3)));
    if (threshold == 60) {
      EXPECT_EQ(expected_events, 0U);
    }
  }
}

TEST(KvCache, SnapshotRoundTrip) {
  Prng rng(10);
  Context ctx(BackendParams::with_slots(32, 4));
  MpcChannel ch(ctx.modulus(), 4, &ctx);
  const Matrix pk = random_matrix(rng, 3, 4, ctx.modulus());
  KVCache cache = init_cache(encode(pk, Layout::Outer, ctx, true), encode(pk, Layout::Outer, ctx, true), ctx);
  const Matrix k = random_matrix(rng, 11, 4, ctx.modulus());
  for (std::size_t i = 0; i < k.rows(); ++i) {
    cache = append_token(cache, pack_token_inner(row_of(k, i), ctx), pack_token_inner(row_of(k, i), ctx), ctx);
  }
  cache = force_refresh(cache, ctx, ch, 2);
  const auto dir = std::filesystem::temp_directory_path() / ("cryptogen_cache_" + std::to_string(::getpid()));
  save_cache(cache, dir, ctx);
  const KVCache back = load_cache(dir, ctx);
  EXPECT_EQ(back.t_auto, cache.t_auto);
  EXPECT_EQ(back.refresh_log.size(), cache.refresh_log.size());
  EXPECT_EQ(decode_auto_k(back, ctx), k);
  EXPECT_EQ(decode(back.prefill_k_matrix(), ctx), pk);
  EXPECT_EQ(back.auto_v.back().noise_budget(), cache.auto_v.back().noise_budget());

  Context other(BackendParams::with_slots(64, 4));
  EXPECT_THROW(load_cache(dir, other), FormatError);
  std::filesystem::remove(dir / "auto_k_1.bin");
  EXPECT_THROW(load_cache(dir, ctx), FormatError);
  std::filesystem::remove_all(dir);
}
