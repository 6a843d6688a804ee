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
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "cryptogen/arcc.hpp"
#include "cryptogen/kv_cache.hpp"
#include "cryptogen/linear_kernels.hpp"
#include "cryptogen/log.hpp"
#include "cryptogen/model.hpp"
#include "cryptogen/mpc.hpp"
#include "cryptogen/nonlinear.hpp"
#include "json.hpp"

namespace cryptogen {

/// Runs fn(0..count-1) on up to `threads` workers. The first exception is
/// rethrown after all workers join.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
        next.store(count);
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct EngineOptions {
  std::size_t threads = 1;
  std::uint64_t seed = 1;
  NonlinearConfig nonlinear{};
  /// Decode step at which every cache ciphertext is refreshed before the
  /// append, regardless of budget.
  std::optional<std::size_t> force_refresh_step;
  /// Receives the masked slot vectors the client sees during refreshes.
  RefreshView* refresh_view = nullptr;
};

/// Counters for one generated token. Step 0 is the prefill pass.
struct StepReport {
  std::size_t step = 0;
  int token = 0;
  std::size_t position = 0;
  OpCounter ops;
  std::size_t cache_cts = 0;  // generated-segment K ciphertexts, layer 0 head 0
  std::size_t refresh_events = 0;
};

inline void to_json(nlohmann::json& j, const StepReport& s) {
  j = {{"step", s.step}, {"token", s.token}, {"position", s.position}, {"ops", s.ops},
       {"cache_cts", s.cache_cts}, {"refresh_events", s.refresh_events}};
}

struct RunReport {
  std::vector<int> prompt;
  std::vector<int> tokens;
  std::vector<StepReport> steps;
  std::vector<RefreshEvent> refreshes;
  CacheStats cache;  // summed over layers and heads
  OpCounter total;
  std::uint64_t mpc_rounds = 0;

  /// Sum of decode-step counters for steps 1..k.
  OpCounter cumulative_decode(std::size_t k) const {
    OpCounter c;
    for (const auto& s : steps) {
      if (s.step >= 1 && s.step <= k) c += s.ops;
    }
    return c;
  }
};

inline void to_json(nlohmann::json& j, const RunReport& r) {
  j = {{"prompt", r.prompt}, {"tokens", r.tokens}, {"steps", r.steps}, {"refreshes", r.refreshes},
       {"cache", r.cache},   {"total", r.total},   {"mpc_rounds", r.mpc_rounds}};
}

/// Weights laid out as diagonal plaintexts, per head where needed.
struct EncodedLayer {
  std::vector<PackedMatrix> w_q, w_k, w_v;  // d1 x d2 per head
  PackedMatrix w_o, w_1, w_2;
};

struct EncodedWeights {
  PackedMatrix embed;    // V x d1
  PackedMatrix unembed;  // d1 x V
  std::vector<EncodedLayer> layers;
};

inline PackedMatrix encode_weight(const Matrix& w, Context& ctx) {
  return encode(w, Encoding::diagonal(w.rows(), w.cols()), ctx, false);
}

inline EncodedWeights encode_weights(const QuantizedModel& qm, Context& ctx) {
  EncodedWeights e;
  e.embed = encode_weight(qm.wte, ctx);
  e.unembed = encode_weight(qm.unembed, ctx);
  for (const auto& L : qm.layers) {
    EncodedLayer el;
    for (std::size_t h = 0; h < qm.config.heads; ++h) {
      el.w_q.push_back(encode_weight(qm.head_columns(L.w_q, h), ctx));
      el.w_k.push_back(encode_weight(qm.head_columns(L.w_k, h), ctx));
      el.w_v.push_back(encode_weight(qm.head_columns(L.w_v, h), ctx));
    }
    el.w_o = encode_weight(L.w_o, ctx);
    el.w_1 = encode_weight(L.w_1, ctx);
    el.w_2 = encode_weight(L.w_2, ctx);
    e.layers.push_back(std::move(el));
  }
  return e;
}

// Conversions between share rows and encrypted layouts.
namespace convert {

using Rows = std::vector<SharePair>;

/// Opens every part of an encrypted outer matrix into share rows.
inline Rows outer_to_rows(const PackedMatrix& x, Context& ctx, MpcChannel& ch) {
  std::vector<SharePair> parts;
  for (const auto& ct : x.cipher()) parts.push_back(he_to_shares(ct, ctx, ch));
  Rows rows(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const auto [part, slot] = x.encoding.locate(i, j);
      rows[i].client.push_back(parts[part].client[slot]);
      rows[i].server.push_back(parts[part].server[slot]);
    }
  }
  return rows;
}

/// Encrypts share rows (m x d) as a blocked outer matrix: each role lays
/// out its share, the client encrypts, the server adds its share.
inline PackedMatrix rows_to_outer_blocked(const Rows& rows, Context& ctx, MpcChannel& ch) {
  const std::size_t m = rows.size();
  const std::size_t d = rows.at(0).size();
  const auto blocking = OuterBlocking::for_rows(m, ctx.n_slots());
  const auto enc = Encoding::outer_blocked(m, d, blocking.per_part, blocking.width);
  std::vector<SharePair> parts(enc.part_count(), SharePair{std::vector<Slot>(ctx.n_slots(), 0),
                                                           std::vector<Slot>(ctx.n_slots(), 0)});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const auto [part, slot] = enc.locate(i, j);
      parts[part].client[slot] = rows[i].client[j];
      parts[part].server[slot] = rows[i].server[j];
    }
  }
  std::vector<SlotCiphertext> cts;
  for (const auto& s : parts) cts.push_back(shares_to_he(s, ctx, ch));
  return {enc, std::move(cts)};
}

/// Encrypts share rows as an outer matrix with one column per ciphertext.
inline PackedMatrix rows_to_outer_columns(const Rows& rows, Context& ctx, MpcChannel& ch) {
  const std::size_t m = rows.size();
  const std::size_t d = rows.at(0).size();
  std::vector<SlotCiphertext> cts;
  for (std::size_t j = 0; j < d; ++j) {
    SharePair col;
    for (std::size_t i = 0; i < m; ++i) {
      col.client.push_back(rows[i].client[j]);
      col.server.push_back(rows[i].server[j]);
    }
    cts.push_back(shares_to_he(col, ctx, ch));
  }
  return {Encoding::outer(m, d), std::move(cts)};
}

}  // namespace convert

/// Encrypted generation engine. The client holds the tokens and decrypts
/// logits; the server holds the weights and the encrypted KV caches. Linear
/// layers run under HE; nonlinear layers run on additive shares.
///
/// Each (layer, head) uses its own channel seeded from the step, so
/// outcomes do not depend on the thread count.
class Engine {
 public:
  Engine(const QuantizedModel& qm, Context& ctx, EngineOptions opt = {})
      : qm_(qm), ctx_(ctx), opt_(std::move(opt)), weights_(encode_weights(qm, ctx)) {
    qm_.config.check_slots(ctx.n_slots());
    if (qm_.fp.p != ctx.modulus()) throw ParamError("fixed-point modulus differs from the context modulus");
  }

  const std::vector<std::vector<KVCache>>& caches() const { return caches_; }
  const std::vector<std::int64_t>& logits() const { return logits_; }
  std::size_t position() const { return position_; }
  std::uint64_t mpc_rounds() const { return rounds_; }

  /// Prefill over the prompt; returns the first generated token.
  int prefill(const std::vector<int>& prompt) {
    const auto& c = qm_.config;
    check_prompt(c, prompt, 0);
    const std::size_t m = prompt.size();
    if (m > ctx_.n_slots()) throw DimensionError("prompt longer than the slot count");
    step_ = 0;
    MpcChannel ch = channel(0, 0);
    const Slot p = ctx_.modulus();

    // Client: blocked one-hot rows; server: embedding CPMM plus positions.
    const auto blocking = OuterBlocking::for_rows(m, ctx_.n_slots());
    Matrix onehot(m, c.vocab);
    for (std::size_t i = 0; i < m; ++i) onehot(i, static_cast<std::size_t>(prompt[i])) = 1;
    const auto x0 = encode(onehot, Encoding::outer_blocked(m, c.vocab, blocking.per_part, blocking.width), ctx_, true);
    auto emb = cpmm_outer_diagonal(x0, weights_.embed, ctx_);
    const auto pos = encode(qm_.wpe.row_range(0, m), emb.encoding, ctx_, false);
    std::vector<SlotCiphertext> with_pos;
    for (std::size_t i = 0; i < emb.part_count(); ++i) with_pos.push_back(ctx_.add_plain(emb.cipher()[i], pos.plain()[i]));
    emb = {emb.encoding, std::move(with_pos)};
    auto h = convert::outer_to_rows(emb, ctx_, ch);

    caches_.assign(c.layers, std::vector<KVCache>(c.heads));
    ShareDomain d(ch);
    for (std::size_t l = 0; l < c.layers; ++l) {
      const auto& L = qm_.layers[l];
      const auto& W = weights_.layers[l];
      convert::Rows x1;
      for (const auto& r : h) x1.push_back(protocols::layernorm(d, r, L.ln1_g, L.ln1_b, qm_.fp, opt_.nonlinear));
      const auto x1_ct = convert::rows_to_outer_blocked(x1, ctx_, ch);

      std::vector<PackedMatrix> head_out(c.heads);
      parallel_for(c.heads, opt_.threads, [&](std::size_t hd) {
        MpcChannel hch = channel(l, hd + 1);
        ShareDomain hdm(hch);
        auto project = [&](const PackedMatrix& w, const std::vector<std::int64_t>& b) {
          auto rows = convert::outer_to_rows(cpmm_outer_diagonal(x1_ct, w, ctx_), ctx_, hch);
          for (auto& r : rows) r = stages::affine(hdm, r, qm_.head_bias(b, hd), qm_.fp);
          return convert::rows_to_outer_columns(rows, ctx_, hch);
        };
        const auto q = project(W.w_q[hd], L.b_q);
        const auto k = project(W.w_k[hd], L.b_k);
        const auto v = project(W.w_v[hd], L.b_v);
        head_out[hd] = prefill_attention(q, k, v, qm_.fp, ctx_, hch, opt_.nonlinear);
        caches_[l][hd] = init_cache(k, v, ctx_);
        absorb(hch);
      });

      std::vector<SlotCiphertext> cols;
      for (const auto& o : head_out) cols.insert(cols.end(), o.cipher().begin(), o.cipher().end());
      const PackedMatrix attn{Encoding::outer(m, c.hidden), std::move(cols)};
      auto proj = convert::outer_to_rows(cpmm_outer_diagonal(attn, W.w_o, ctx_), ctx_, ch);
      for (std::size_t i = 0; i < m; ++i) h[i] = d.add(h[i], stages::affine(d, proj[i], L.b_o, qm_.fp));

      convert::Rows x2;
      for (const auto& r : h) x2.push_back(protocols::layernorm(d, r, L.ln2_g, L.ln2_b, qm_.fp, opt_.nonlinear));
      auto f1 = convert::outer_to_rows(cpmm_outer_diagonal(convert::rows_to_outer_blocked(x2, ctx_, ch), W.w_1, ctx_),
                                       ctx_, ch);
      for (auto& r : f1) r = protocols::gelu(d, stages::affine(d, r, L.b_1, qm_.fp), qm_.fp);
      auto f2 = convert::outer_to_rows(cpmm_outer_diagonal(convert::rows_to_outer_blocked(f1, ctx_, ch), W.w_2, ctx_),
                                       ctx_, ch);
      for (std::size_t i = 0; i < m; ++i) h[i] = d.add(h[i], stages::affine(d, f2[i], L.b_2, qm_.fp));
    }
    absorb(ch);
    (void)p;
    position_ = m;
    finish(h.back(), ch);
    return argmax(logits_);
  }

  /// Processes `token` at the next position; returns the next token.
  int decode(int token) {
    const auto& c = qm_.config;
    if (caches_.empty()) throw Error("decode before prefill");
    if (token < 0 || static_cast<std::size_t>(token) >= c.vocab) throw DimensionError("token id out of range");
    if (position_ >= c.max_seq) throw DimensionError("sequence exceeds max_seq " + std::to_string(c.max_seq));
    step_ += 1;
    MpcChannel ch = channel(0, 0);
    ShareDomain d(ch);

    std::vector<Slot> onehot(c.vocab, 0);
    onehot[static_cast<std::size_t>(token)] = 1;
    auto emb = cpvm_inner_diagonal(ctx_.encrypt(ctx_.plain(onehot)), weights_.embed, ctx_);
    const auto wpe_row = qm_.wpe.row(position_);
    emb = ctx_.add_plain(emb, ctx_.plain(std::vector<Slot>(wpe_row.begin(), wpe_row.end())));
    SharePair h = he_to_shares(emb, ctx_, ch, c.hidden);

    const bool force = opt_.force_refresh_step && *opt_.force_refresh_step == step_;
    for (std::size_t l = 0; l < c.layers; ++l) {
      const auto& L = qm_.layers[l];
      const auto& W = weights_.layers[l];
      const auto x1 = shares_to_he(protocols::layernorm(d, h, L.ln1_g, L.ln1_b, qm_.fp, opt_.nonlinear), ctx_, ch);

      std::vector<SharePair> head_out(c.heads);
      parallel_for(c.heads, opt_.threads, [&](std::size_t hd) {
        MpcChannel hch = channel(l, hd + 1);
        ShareDomain hdm(hch);
        auto project = [&](const PackedMatrix& w, const std::vector<std::int64_t>& b) {
          auto s = he_to_shares(cpvm_inner_diagonal(x1, w, ctx_), ctx_, hch, qm_.d2());
          return shares_to_he(stages::affine(hdm, s, qm_.head_bias(b, hd), qm_.fp), ctx_, hch);
        };
        const auto q = project(W.w_q[hd], L.b_q);
        const auto k = project(W.w_k[hd], L.b_k);
        const auto v = project(W.w_v[hd], L.b_v);
        auto& cache = caches_[l][hd];
        cache = force ? force_refresh(cache, ctx_, hch, step_, opt_.refresh_view)
                      : maybe_refresh(cache, ctx_, hch, step_, opt_.refresh_view);
        cache = append_token(cache, k, v, ctx_);
        head_out[hd] = attention_step_shares(q, cache, qm_.fp, ctx_, hch, opt_.nonlinear);
        absorb(hch);
      });

      SharePair attn;
      for (auto& o : head_out) attn = ShareDomain::concat(std::move(attn), o);
      auto proj = he_to_shares(cpvm_inner_diagonal(shares_to_he(attn, ctx_, ch), W.w_o, ctx_), ctx_, ch, c.hidden);
      h = d.add(h, stages::affine(d, proj, L.b_o, qm_.fp));

      const auto x2 = shares_to_he(protocols::layernorm(d, h, L.ln2_g, L.ln2_b, qm_.fp, opt_.nonlinear), ctx_, ch);
      auto f1 = he_to_shares(cpvm_inner_diagonal(x2, W.w_1, ctx_), ctx_, ch, c.ffn);
      f1 = protocols::gelu(d, stages::affine(d, f1, L.b_1, qm_.fp), qm_.fp);
      auto f2 = he_to_shares(cpvm_inner_diagonal(shares_to_he(f1, ctx_, ch), W.w_2, ctx_), ctx_, ch, c.hidden);
      h = d.add(h, stages::affine(d, f2, L.b_2, qm_.fp));
    }
    absorb(ch);
    position_ += 1;
    finish(h, ch);
    return argmax(logits_);
  }

  /// Greedy generation of k tokens: one prefill pass, then k - 1 decode steps.
  RunReport generate(const std::vector<int>& prompt, std::size_t k) {
    check_prompt(qm_.config, prompt, k);
    RunReport report;
    report.prompt = prompt;
    const OpCounter start = ctx_.counters();
    OpCounter before = start;
    for (std::size_t s = 0; s < k; ++s) {
      const int tok = s == 0 ? prefill(prompt) : decode(report.tokens.back());
      const OpCounter now = ctx_.counters();
      StepReport sr;
      sr.step = s;
      sr.token = tok;
      sr.position = position_ - 1;
      sr.ops = now - before;
      sr.cache_cts = caches_.at(0).at(0).auto_k.size();
      sr.refresh_events = sr.ops.refresh_events;
      report.steps.push_back(sr);
      report.tokens.push_back(tok);
      before = now;
      log::debug("step ", s, " token ", tok, " mult_cipher ", sr.ops.mult_cipher);
    }
    report.total = ctx_.counters() - start;
    for (const auto& layer : caches_) {
      for (const auto& cache : layer) {
        const auto st = cache_stats(cache, ctx_);
        report.cache.ct_count += st.ct_count;
        report.cache.auto_ct_count += st.auto_ct_count;
        report.cache.t_auto = st.t_auto;
        report.cache.refresh_count += st.refresh_count;
        report.cache.bytes += st.bytes;
        report.refreshes.insert(report.refreshes.end(), cache.refresh_log.begin(), cache.refresh_log.end());
      }
    }
    report.mpc_rounds = rounds_;
    return report;
  }

 private:
  MpcChannel channel(std::size_t layer, std::size_t head) const {
    const std::uint64_t tag = (step_ * 1024 + layer) * 1024 + head;
    return MpcChannel(ctx_.modulus(), mix_seed(opt_.seed, tag), &ctx_);
  }

  void absorb(const MpcChannel& ch) { rounds_.fetch_add(ch.rounds()); }

  void finish(const SharePair& h, MpcChannel& ch) {
    ShareDomain d(ch);
    const auto x = protocols::layernorm(d, h, qm_.lnf_g, qm_.lnf_b, qm_.fp, opt_.nonlinear);
    const auto out = cpvm_inner_diagonal(shares_to_he(x, ctx_, ch), weights_.unembed, ctx_);
    // The client decrypts its own logits.
    const auto values = ctx_.decrypt(out).values();
    logits_.assign(qm_.config.vocab, 0);
    for (std::size_t i = 0; i < logits_.size(); ++i) logits_[i] = zp::to_signed(values[i], ctx_.modulus());
  }

  const QuantizedModel& qm_;
  Context& ctx_;
  EngineOptions opt_;
  EncodedWeights weights_;
  std::vector<std::vector<KVCache>> caches_;
  std::vector<std::int64_t> logits_;
  std::size_t position_ = 0;
  std::size_t step_ = 0;
  std::atomic<std::uint64_t> rounds_{0};
};

/// Stateless reference loop: every step recomputes a full prefill over the
/// whole sequence so far with the same kernels (no KV cache). Step s runs
/// on prompt.size() + s tokens; step 0 is the ordinary prefill.
inline RunReport stateless_generate(const QuantizedModel& qm, Context& ctx, const std::vector<int>& prompt,
                                    std::size_t k, const EngineOptions& opt = {}) {
  check_prompt(qm.config, prompt, k);
  RunReport report;
  report.prompt = prompt;
  std::vector<int> seq = prompt;
  const OpCounter start = ctx.counters();
  for (std::size_t s = 0; s < k; ++s) {
    Engine engine(qm, ctx, opt);
    const OpCounter before = ctx.counters();
    const int tok = engine.prefill(seq);
    StepReport sr;
    sr.step = s;
    sr.token = tok;
    sr.position = seq.size() - 1;
    sr.ops = ctx.counters() - before;
    report.steps.push_back(sr);
    report.tokens.push_back(tok);
    report.mpc_rounds += engine.mpc_rounds();
    seq.push_back(tok);
  }
  report.total = ctx.counters() - start;
  return report;
}

}  // namespace cryptogen
