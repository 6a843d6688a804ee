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
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "cryptogen/backend.hpp"
#include "cryptogen/encodings.hpp"
#include "cryptogen/errors.hpp"
#include "cryptogen/linear_kernels.hpp"
#include "cryptogen/matrix_io.hpp"
#include "cryptogen/mpc.hpp"
#include "json.hpp"

namespace cryptogen {

/// One client-assisted re-encryption of a cache ciphertext.
struct RefreshEvent {
  std::size_t step = 0;
  std::string part;  // e.g. "auto_k[3]"
  int budget_before = 0;
  std::uint64_t mpc_bytes = 0;
  bool forced = false;
};

inline void to_json(nlohmann::json& j, const RefreshEvent& e) {
  j = {{"step", e.step}, {"part", e.part}, {"budget_before", e.budget_before}, {"mpc_bytes", e.mpc_bytes},
       {"forced", e.forced}};
}

inline void from_json(const nlohmann::json& j, RefreshEvent& e) {
  e.step = j.at("step").get<std::size_t>();
  e.part = j.at("part").get<std::string>();
  e.budget_before = j.at("budget_before").get<int>();
  e.mpc_bytes = j.at("mpc_bytes").get<std::uint64_t>();
  e.forced = j.value("forced", false);
}

/// Per-head encrypted KV cache. The prefill segment holds one column per
/// ciphertext (m x d2, outer); generated tokens are packed B per ciphertext
/// in blocks of width w = next power of two >= d2 (B = n / w).
/// A cache is a value: appends and refreshes return a new cache that shares
/// untouched ciphertexts with the old one.
struct KVCache {
  std::size_t d2 = 0;
  std::size_t m = 0;
  std::size_t t_auto = 0;
  std::size_t block = 0;        // B
  std::size_t block_width = 0;  // w
  std::vector<SlotCiphertext> prefill_k, prefill_v;
  std::vector<SlotCiphertext> auto_k, auto_v;
  std::vector<RefreshEvent> refresh_log;

  std::size_t length() const { return m + t_auto; }

  PackedMatrix prefill_k_matrix() const { return {Encoding::outer(m, d2), prefill_k}; }
  PackedMatrix prefill_v_matrix() const { return {Encoding::outer(m, d2), prefill_v}; }
  Encoding auto_encoding() const {
    return {Layout::InnerCompacted, t_auto, d2, block, block_width};
  }
  PackedMatrix auto_k_matrix() const { return {auto_encoding(), auto_k}; }
  PackedMatrix auto_v_matrix() const { return {auto_encoding(), auto_v}; }
};

struct CacheStats {
  std::size_t ct_count = 0;
  std::size_t auto_ct_count = 0;  // per K (equal for V)
  std::size_t t_auto = 0;
  std::size_t refresh_count = 0;
  std::uint64_t bytes = 0;
};

inline void to_json(nlohmann::json& j, const CacheStats& s) {
  j = {{"ct_count", s.ct_count}, {"auto_ct_count", s.auto_ct_count}, {"t_auto", s.t_auto},
       {"refresh_count", s.refresh_count}, {"bytes", s.bytes}};
}

/// Empty cache for head dimension d2.
inline KVCache init_cache(std::size_t d2, const Context& ctx) {
  if (d2 == 0) throw DimensionError("head dimension must be positive");
  const auto enc = Encoding::inner_compacted(0, d2, ctx.n_slots());
  KVCache c;
  c.d2 = d2;
  c.block = enc.per_part;
  c.block_width = enc.block_width;
  return c;
}

/// Cache seeded with outer-packed prefill keys and values (m x d2, one
/// column per ciphertext).
inline KVCache init_cache(const PackedMatrix& k_pref, const PackedMatrix& v_pref, const Context& ctx) {
  if (!k_pref.encrypted() || !v_pref.encrypted()) throw DimensionError("prefill cache must be encrypted");
  if (k_pref.encoding.kind != Layout::Outer || v_pref.encoding.kind != Layout::Outer ||
      k_pref.encoding.per_part != 1 || v_pref.encoding.per_part != 1) {
    throw DimensionError("prefill cache must be outer-packed, one column per ciphertext");
  }
  if (k_pref.rows() != v_pref.rows() || k_pref.cols() != v_pref.cols()) {
    throw DimensionError("prefill K and V shapes differ");
  }
  if (k_pref.rows() > ctx.n_slots()) throw DimensionError("prefill length exceeds slot count");
  KVCache c = init_cache(k_pref.cols(), ctx);
  c.m = k_pref.rows();
  if (c.m > 0) {
    c.prefill_k = k_pref.cipher();
    c.prefill_v = v_pref.cipher();
  }
  return c;
}

/// Writes k and v (inner, slots 0..d2-1) at block t_auto mod B of the last
/// generated-segment ciphertext: rotate into place (skipped at offset 0),
/// mask the block, add. A new ciphertext (a fresh encryption of zero) is
/// opened when t_auto mod B = 0.
inline KVCache append_token(const KVCache& cache, const SlotCiphertext& k, const SlotCiphertext& v, Context& ctx) {
  KVCache out = cache;
  const std::size_t slot_block = cache.t_auto % cache.block;
  const std::size_t pos = slot_block * cache.block_width;
  if (slot_block == 0) {
    out.auto_k.push_back(ctx.encrypt(ctx.zeros()));
    out.auto_v.push_back(ctx.encrypt(ctx.zeros()));
  }
  const auto mask = range_mask(pos, pos + cache.d2, ctx);
  auto place = [&](const SlotCiphertext& x) {
    const auto aligned = pos == 0 ? x : ctx.rotate(x, -static_cast<std::int64_t>(pos));
    return ctx.mult_plain(aligned, mask);
  };
  out.auto_k.back() = ctx.add(out.auto_k.back(), place(k));
  out.auto_v.back() = ctx.add(out.auto_v.back(), place(v));
  out.t_auto += 1;
  return out;
}

/// Where the masked values seen by the client during refresh are recorded
/// (for statistical checks of the masking).
using RefreshView = std::vector<std::vector<Slot>>;

namespace detail {

inline SlotCiphertext refresh_one(const SlotCiphertext& ct, Context& ctx, MpcChannel& ch, RefreshView* view) {
  const Slot p = ctx.modulus();
  std::vector<Slot> r = ch.mask(ctx.n_slots());
  std::vector<Slot> neg_r(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) neg_r[i] = zp::neg(r[i], p);
  // Server: mask. Client: decrypt and re-encrypt. Server: unmask.
  const auto masked = ctx.add_plain(ct, PlainVector(std::move(neg_r)));
  const auto opened = ctx.decrypt(masked);
  if (view != nullptr) view->push_back(opened.values());
  const auto fresh = ctx.encrypt(opened);
  return ctx.add_plain(fresh, PlainVector(std::move(r)));
}

inline std::uint64_t refresh_bytes(const Context& ctx) {
  return 2ULL * ctx.n_slots() * ceil_log2(ctx.modulus()) / 8;
}

template <class Pred>
KVCache refresh_parts(const KVCache& cache, Context& ctx, MpcChannel& ch, std::size_t step, bool forced,
                      Pred should_refresh, RefreshView* view) {
  KVCache out = cache;
  const std::uint64_t bytes = refresh_bytes(ctx);
  auto visit = [&](std::vector<SlotCiphertext>& parts, const char* name) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const int before = parts[i].noise_budget();
      if (!should_refresh(before)) continue;
      parts[i] = refresh_one(parts[i], ctx, ch, view);
      ch.charge("refresh", ctx.n_slots(), bytes, 2);
      ctx.record_refresh();
      out.refresh_log.push_back({step, std::string(name) + "[" + std::to_string(i) + "]", before, bytes, forced});
    }
  };
  visit(out.prefill_k, "prefill_k");
  visit(out.prefill_v, "prefill_v");
  visit(out.auto_k, "auto_k");
  visit(out.auto_v, "auto_v");
  return out;
}

}  // namespace detail

/// Lazy refresh: every cache ciphertext with budget <= refresh_threshold is
/// masked with uniform r by the server, decrypted and re-encrypted by the
/// client, and unmasked. Values are unchanged; budgets return to the
/// initial value. No-op when all budgets are healthy.
inline KVCache maybe_refresh(const KVCache& cache, Context& ctx, MpcChannel& ch, std::size_t step = 0,
                             RefreshView* view = nullptr) {
  const int threshold = ctx.params().refresh_threshold;
  return detail::refresh_parts(
      cache, ctx, ch, step, false, [threshold](int budget) { return budget <= threshold; }, view);
}

/// Refreshes every ciphertext regardless of budget (events marked forced).
inline KVCache force_refresh(const KVCache& cache, Context& ctx, MpcChannel& ch, std::size_t step = 0,
                             RefreshView* view = nullptr) {
  return detail::refresh_parts(
      cache, ctx, ch, step, true, [](int) { return true; }, view);
}

inline CacheStats cache_stats(const KVCache& cache, const Context& ctx) {
  CacheStats s;
  s.auto_ct_count = cache.auto_k.size();
  s.ct_count = cache.prefill_k.size() + cache.prefill_v.size() + cache.auto_k.size() + cache.auto_v.size();
  s.t_auto = cache.t_auto;
  s.refresh_count = cache.refresh_log.size();
  s.bytes = s.ct_count * ctx.ciphertext_bytes();
  return s;
}

/// Decrypted generated-segment keys (t_auto x d2).
inline Matrix decode_auto_k(const KVCache& cache, Context& ctx) {
  return cache.t_auto == 0 ? Matrix(0, cache.d2) : decode(cache.auto_k_matrix(), ctx);
}

inline Matrix decode_auto_v(const KVCache& cache, Context& ctx) {
  return cache.t_auto == 0 ? Matrix(0, cache.d2) : decode(cache.auto_v_matrix(), ctx);
}

/// Snapshot: one binary file per ciphertext (1 x n residues) plus
/// manifest.json holding shape, budgets and the refresh log.
inline void save_cache(const KVCache& cache, const std::filesystem::path& dir, const Context& ctx) {
  std::filesystem::create_directories(dir);
  nlohmann::json parts = nlohmann::json::array();
  auto dump = [&](const std::vector<SlotCiphertext>& list, const char* name) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string file = std::string(name) + "_" + std::to_string(i) + ".bin";
      const auto payload = list[i].payload();
      io::save_matrix((dir / file).string(), Matrix(1, payload.size(), std::vector<Slot>(payload.begin(), payload.end())),
                      ctx.modulus());
      parts.push_back({{"segment", name}, {"index", i}, {"file", file}, {"budget", list[i].noise_budget()}});
    }
  };
  dump(cache.prefill_k, "prefill_k");
  dump(cache.prefill_v, "prefill_v");
  dump(cache.auto_k, "auto_k");
  dump(cache.auto_v, "auto_v");
  nlohmann::json manifest = {{"format", "cryptogen-kv-cache"},
                             {"version", 1},
                             {"n_slots", ctx.n_slots()},
                             {"plain_modulus", ctx.modulus()},
                             {"d2", cache.d2},
                             {"m", cache.m},
                             {"t_auto", cache.t_auto},
                             {"block", cache.block},
                             {"block_width", cache.block_width},
                             {"parts", parts},
                             {"refresh_log", cache.refresh_log}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError("cannot write cache manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

inline KVCache load_cache(const std::filesystem::path& dir, Context& ctx) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("cannot open cache manifest in " + dir.string());
  KVCache c;
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("format").get<std::string>() != "cryptogen-kv-cache") throw FormatError("not a cache snapshot");
    if (j.at("n_slots").get<std::size_t>() != ctx.n_slots() || j.at("plain_modulus").get<Slot>() != ctx.modulus()) {
      throw FormatError("cache snapshot was written for different backend parameters");
    }
    c.d2 = j.at("d2").get<std::size_t>();
    c.m = j.at("m").get<std::size_t>();
    c.t_auto = j.at("t_auto").get<std::size_t>();
    c.block = j.at("block").get<std::size_t>();
    c.block_width = j.at("block_width").get<std::size_t>();
    c.refresh_log = j.at("refresh_log").get<std::vector<RefreshEvent>>();
    for (const auto& part : j.at("parts")) {
      Slot p = 0;
      const Matrix body = io::load_matrix((dir / part.at("file").get<std::string>()).string(), &p);
      if (p != ctx.modulus() || body.rows() != 1) throw FormatError("cache part has wrong modulus or shape");
      auto ct = ctx.import_ciphertext(body.data(), part.at("budget").get<int>());
      const auto seg = part.at("segment").get<std::string>();
      if (seg == "prefill_k") c.prefill_k.push_back(std::move(ct));
      else if (seg == "prefill_v") c.prefill_v.push_back(std::move(ct));
      else if (seg == "auto_k") c.auto_k.push_back(std::move(ct));
      else if (seg == "auto_v") c.auto_v.push_back(std::move(ct));
      else throw FormatError("unknown cache segment '" + seg + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("cache manifest: ") + e.what());
  }
  const std::size_t want_auto = ceil_div(c.t_auto, c.block);
  if (c.auto_k.size() != want_auto || c.auto_v.size() != want_auto ||
      c.prefill_k.size() != (c.m > 0 ? c.d2 : 0) || c.prefill_v.size() != c.prefill_k.size()) {
    throw FormatError("cache snapshot part counts do not match its shape");
  }
  return c;
}

}  // namespace cryptogen
