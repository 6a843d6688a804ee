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

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cryptogen/arcc.hpp"
#include "cryptogen/costmodel.hpp"
#include "cryptogen/kv_cache.hpp"
#include "cryptogen/linear_kernels.hpp"
#include "cryptogen/model.hpp"
#include "cryptogen/nonlinear.hpp"
#include "cryptogen/pipeline.hpp"
#include "json.hpp"

// End-to-end property checks shared by the `verify` command and the
// acceptance runner. Each check returns a verdict plus a one-line detail.
namespace cryptogen::checks {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

inline void to_json(nlohmann::json& j, const CheckResult& r) {
  j = {{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}, {"seconds", r.seconds}};
}

/// Runs body() and times it; exceptions become failures.
inline CheckResult run_check(const std::string& name, const std::function<CheckResult()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::vector<int> random_prompt(std::size_t len, std::size_t vocab, std::uint64_t seed) {
  Prng rng(mix_seed(seed, 0x70726f6d7074ULL));
  std::vector<int> p(len);
  for (auto& t : p) t = static_cast<int>(rng.uniform(vocab));
  return p;
}

inline QuantizedModel quantize_for(const Model& model, const Context& ctx) {
  return quantize(model, FixedPointParams(model.config.frac_bits, ctx.modulus()));
}

template <class T>
std::string join(const std::vector<T>& v, const char* sep = ",") {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? sep : "") << v[i];
  return os.str();
}

/// Encrypted generation equals the plaintext oracle token for token.
inline CheckResult oracle_equivalence(const Model& model, const BackendParams& params, std::size_t seeds,
                                      std::size_t prompt_len, std::size_t k, std::uint64_t base_seed = 1,
                                      std::size_t threads = 1) {
  std::size_t matched = 0;
  std::string first_bad;
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = base_seed + s;
    Context ctx(params);
    const auto qm = quantize_for(model, ctx);
    const auto prompt = random_prompt(prompt_len, model.config.vocab, seed);
    const auto expected = Oracle(qm).generate(prompt, k);
    EngineOptions opt;
    opt.seed = seed;
    opt.threads = threads;
    Engine engine(qm, ctx, opt);
    const auto got = engine.generate(prompt, k).tokens;
    if (got == expected) {
      ++matched;
    } else if (first_bad.empty()) {
      first_bad = "; seed " + std::to_string(seed) + " oracle [" + join(expected) + "] encrypted [" + join(got) + "]";
    }
  }
  return {"", matched == seeds,
          std::to_string(matched) + "/" + std::to_string(seeds) + " seeds token-exact (prompt " +
              std::to_string(prompt_len) + ", k " + std::to_string(k) + ")" + first_bad};
}

/// CPMM, CPVM and both ARCC modes against plaintext products mod p on
/// random instances with m, d <= 16 and n in {16, 32, 64}.
inline CheckResult kernel_equivalence(std::size_t instances, std::uint64_t seed) {
  Prng rng(seed);
  std::size_t failures = 0;
  std::string first_bad;
  auto fail = [&](const std::string& what) {
    ++failures;
    if (first_bad.empty()) first_bad = "; first failure: " + what;
  };
  for (std::size_t it = 0; it < instances; ++it) {
    const std::size_t n = std::size_t{16} << rng.uniform(3);
    Context ctx(BackendParams::with_slots(n, seed + it));
    const Slot p = ctx.modulus();
    auto dim = [&] { return static_cast<std::size_t>(1 + rng.uniform(16)); };
    auto random = [&](std::size_t r, std::size_t c) {
      Matrix a(r, c);
      for (auto& v : a.data()) v = rng.uniform(p);
      return a;
    };
    const std::size_t m = dim(), d1 = dim(), d2 = dim();
    const std::string shape = " n=" + std::to_string(n) + " m=" + std::to_string(m) + " d1=" + std::to_string(d1) +
                              " d2=" + std::to_string(d2);
    const Matrix x = random(m, d1);
    const Matrix w = random(d1, d2);
    const auto wd = encode(w, Encoding::diagonal(d1, d2), ctx, false);

    // CPMM from one-column-per-ciphertext outer input.
    const auto xe = encode(x, Encoding::outer(m, d1), ctx, true);
    if (decode(cpmm_outer_diagonal(xe, wd, ctx), ctx) != multiply_mod(x, w, p)) fail("cpmm" + shape);

    // CPVM on the first row.
    const std::vector<Slot> row(x.row(0).begin(), x.row(0).end());
    const auto y = ctx.decrypt(cpvm_inner_diagonal(pack_token_inner(row, ctx), wd, ctx)).values();
    if (std::vector<Slot>(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(d2)) != vecmat_mod(row, w, p)) {
      fail("cpvm" + shape);
    }

    // Inner-inner: q (d2) against an outer R x d2 basis: q * basis^T.
    const Matrix basis = random(m, d2);
    const auto q = random(1, d2);
    const std::vector<Slot> qv(q.row(0).begin(), q.row(0).end());
    const auto ii = arcc_inner_inner(pack_token_inner(qv, ctx), encode(basis, Encoding::outer(m, d2), ctx, true), ctx);
    const auto ii_plain = vecmat_mod(qv, basis.transpose(), p);
    const auto ii_slots = ctx.decrypt(ii.parts[0]).values();
    for (std::size_t r = 0; r < m; ++r) {
      if (ii_slots[r] != ii_plain[r]) {
        fail("inner-inner" + shape);
        break;
      }
    }

    // Inner-outer over a compacted row store: q * rows^T.
    const auto rows = random(m, d2);
    const auto io = arcc_inner_outer(pack_token_inner(qv, ctx),
                                     encode(rows, Encoding::inner_compacted(m, d2, n), ctx, true), ctx);
    const auto io_plain = vecmat_mod(qv, rows.transpose(), p);
    std::vector<std::vector<Slot>> opened;
    for (const auto& part : io.parts) opened.push_back(ctx.decrypt(part).values());
    for (std::size_t r = 0; r < m; ++r) {
      const auto [part, slot] = io.locate(r);
      if (opened[part][slot] != io_plain[r]) {
        fail("inner-outer" + shape);
        break;
      }
    }
  }
  return {"", failures == 0,
          std::to_string(instances * 4 - failures) + "/" + std::to_string(instances * 4) + " kernel products exact" +
              first_bad};
}

/// Formula-backed cells of the cost table plus an instrumented CPMM.
inline CheckResult table_cells() {
  const CostDims dims{};
  std::vector<std::string> bad;
  auto expect = [&](Method m, const CostCell& c, std::uint64_t v, const char* what) {
    if (c.value != v || !c.reproduced()) bad.push_back(std::string(to_string(m)) + " " + what);
  };
  expect(Method::Gazelle, predict_costs(Method::Gazelle, Stage::Prefill, dims).mult, 98304, "prefill Mult");
  for (auto m : {Method::IRON, Method::BOLT, Method::CryptoGen}) {
    expect(m, predict_costs(m, Stage::Prefill, dims).mult, 768, "prefill Mult");
  }
  expect(Method::CryptoGen, predict_costs(Method::CryptoGen, Stage::Prefill, dims).ct, 12, "prefill Ct");
  const auto reported = reported_only_cells(cost_table(dims));
  const auto measured = measure_cpmm(dims.m, dims.d1, dims.d2, dims.n);
  if (measured.mult_plain != 768) bad.push_back("instrumented CPMM mult_plain " + std::to_string(measured.mult_plain));
  std::string detail = "listed cells exact; CPMM mult_plain " + std::to_string(measured.mult_plain) + "; " +
                       std::to_string(reported.size()) + " reported-only cells";
  if (!bad.empty()) detail = "mismatch: " + join(bad);
  return {"", bad.empty() && !reported.empty(), detail};
}

struct ScalingResult {
  double cryptogen_exponent = 0;
  double stateless_exponent = 0;
  std::vector<std::uint64_t> cryptogen_cumulative, stateless_cumulative;
};

inline const std::vector<std::size_t>& scaling_points() {
  static const std::vector<std::size_t> ks{8, 16, 32, 64};
  return ks;
}

/// Cumulative decode mult_cipher for k = 8..64 with the KV cache.
inline std::vector<std::uint64_t> cached_cumulative(const Model& model, const BackendParams& params,
                                                    std::size_t prompt_len, std::uint64_t seed) {
  Context ctx(params);
  const auto qm = quantize_for(model, ctx);
  EngineOptions opt;
  opt.seed = seed;
  Engine engine(qm, ctx, opt);
  const auto run = engine.generate(random_prompt(prompt_len, model.config.vocab, seed), scaling_points().back() + 1);
  std::vector<std::uint64_t> out;
  for (auto k : scaling_points()) out.push_back(run.cumulative_decode(k).mult_cipher);
  return out;
}

/// Cumulative mult_cipher for generating k = 8..64 tokens by recomputing a
/// full prefill at every step, starting from a one-token prompt.
inline std::vector<std::uint64_t> stateless_cumulative(const Model& model, const BackendParams& params,
                                                       std::uint64_t seed) {
  Context ctx(params);
  const auto qm = quantize_for(model, ctx);
  EngineOptions opt;
  opt.seed = seed;
  const auto run = stateless_generate(qm, ctx, random_prompt(1, model.config.vocab, seed), scaling_points().back(), opt);
  std::vector<std::uint64_t> out;
  for (auto k : scaling_points()) {
    std::uint64_t c = 0;
    for (std::size_t s = 0; s < k; ++s) c += run.steps[s].ops.mult_cipher;
    out.push_back(c);
  }
  return out;
}

inline double exponent_of(const std::vector<std::uint64_t>& ys) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    x.push_back(static_cast<double>(scaling_points()[i]));
    y.push_back(static_cast<double>(ys[i]));
  }
  return loglog_slope(x, y);
}

/// Per-step decode counters are identical for every prompt length.
inline CheckResult prefix_independence(const Model& model, const BackendParams& params,
                                       const std::vector<std::size_t>& prompt_lengths, std::size_t k,
                                       std::uint64_t seed) {
  std::vector<RunReport> runs;
  for (auto m : prompt_lengths) {
    Context ctx(params);
    const auto qm = quantize_for(model, ctx);
    EngineOptions opt;
    opt.seed = seed;
    Engine engine(qm, ctx, opt);
    runs.push_back(engine.generate(random_prompt(m, model.config.vocab, seed), k + 1));
  }
  std::size_t compared = 0;
  std::string bad;
  for (std::size_t s = 1; s <= k; ++s) {
    for (std::size_t r = 1; r < runs.size(); ++r) {
      ++compared;
      if (!runs[r].steps[s].ops.same_he_ops(runs[0].steps[s].ops) && bad.empty()) {
        bad = "; step " + std::to_string(s) + " differs between prompt " + std::to_string(prompt_lengths[0]) +
              " and " + std::to_string(prompt_lengths[r]);
      }
    }
  }
  return {"", bad.empty(),
          std::to_string(k) + " decode steps x " + std::to_string(runs.size()) + " prompt lengths {" +
              join(prompt_lengths) + "}: HE counters " + (bad.empty() ? "identical" : "differ") + bad};
}

/// Generated-segment ciphertext count after t appends equals ceil(t / B).
inline CheckResult compaction_law(std::size_t n, std::size_t d2, std::uint64_t seed) {
  Context ctx(BackendParams::with_slots(n, seed));
  const std::size_t block = n / pow2_ceil(d2);
  const std::vector<std::size_t> targets{1, block - 1, block, block + 1, 2 * block + 5};
  Prng rng(seed);
  KVCache cache = init_cache(d2, ctx);
  std::vector<std::size_t> counts;
  bool ok = true;
  std::size_t t = 0;
  for (auto target : targets) {
    if (target == 0) continue;
    while (t < target) {
      const auto k = pack_token_inner(rng.uniform_vector(d2, ctx.modulus()), ctx);
      const auto v = pack_token_inner(rng.uniform_vector(d2, ctx.modulus()), ctx);
      cache = append_token(cache, k, v, ctx);
      ++t;
    }
    counts.push_back(cache.auto_k.size());
    ok = ok && cache.auto_k.size() == ceil_div(t, block) && cache.auto_v.size() == ceil_div(t, block);
  }
  return {"", ok,
          "n=" + std::to_string(n) + " d2=" + std::to_string(d2) + " B=" + std::to_string(block) + ": t={" +
              join(targets) + "} -> cts={" + join(counts) + "}"};
}

/// Decrypts every cache of an engine (prefill and generated segments).
inline std::vector<Matrix> decoded_caches(const Engine& engine, Context& ctx) {
  std::vector<Matrix> out;
  for (const auto& layer : engine.caches()) {
    for (const auto& c : layer) {
      out.push_back(decode(c.prefill_k_matrix(), ctx));
      out.push_back(decode(c.prefill_v_matrix(), ctx));
      out.push_back(decode_auto_k(c, ctx));
      out.push_back(decode_auto_v(c, ctx));
    }
  }
  return out;
}

/// Refresh liveness (a long run never fails to decrypt), transparency (a
/// forced refresh changes neither caches nor tokens) and the threshold rule
/// (unforced events only at budget <= threshold, checked with a threshold
/// high enough to trigger them).
inline CheckResult refresh_behaviour(const Model& model, const BackendParams& params, std::size_t long_steps,
                                     std::uint64_t seed) {
  std::vector<std::string> notes;
  bool ok = true;
  const auto prompt = random_prompt(8, model.config.vocab, seed);

  {
    Context ctx(params);
    const auto qm = quantize_for(model, ctx);
    EngineOptions opt;
    opt.seed = seed;
    Engine engine(qm, ctx, opt);
    const auto run = engine.generate(prompt, long_steps + 1);
    int min_budget = params.initial_noise_budget;
    for (const auto& layer : engine.caches())
      for (const auto& c : layer)
        for (const auto* parts : {&c.prefill_k, &c.prefill_v, &c.auto_k, &c.auto_v})
          for (const auto& ct : *parts) min_budget = std::min(min_budget, ct.noise_budget());
    notes.push_back(std::to_string(long_steps) + " decode steps completed, " + std::to_string(run.refreshes.size()) +
                    " refreshes, min cache budget " + std::to_string(min_budget));
    for (const auto& e : run.refreshes) ok = ok && e.budget_before <= params.refresh_threshold;
  }

  {
    const std::size_t k = 20;
    const std::size_t force_at = 9;
    Context a_ctx(params), b_ctx(params);
    const auto qm = quantize_for(model, a_ctx);
    EngineOptions a_opt, b_opt;
    a_opt.seed = b_opt.seed = seed;
    b_opt.force_refresh_step = force_at;
    Engine a(qm, a_ctx, a_opt), b(qm, b_ctx, b_opt);
    const auto ra = a.generate(prompt, k);
    const auto rb = b.generate(prompt, k);
    const bool same_tokens = ra.tokens == rb.tokens;
    const bool same_caches = decoded_caches(a, a_ctx) == decoded_caches(b, b_ctx);
    const bool fired = !rb.refreshes.empty() && std::all_of(rb.refreshes.begin(), rb.refreshes.end(),
                                                            [&](const RefreshEvent& e) { return e.forced && e.step == force_at; });
    ok = ok && same_tokens && same_caches && fired;
    notes.push_back("forced refresh at step " + std::to_string(force_at) + " (" + std::to_string(rb.refreshes.size()) +
                    " events): tokens " + (same_tokens ? "unchanged" : "CHANGED") + ", caches " +
                    (same_caches ? "unchanged" : "CHANGED"));
  }

  {
    // Appended parts settle one mult_plain and one rotation below a fresh
    // budget; a threshold just above that makes lazy refresh fire.
    BackendParams tight = params;
    const auto& c = params.noise_costs;
    tight.refresh_threshold = params.initial_noise_budget - c.rotate - c.mult_plain + 1;
    Context ctx(tight);
    const auto qm = quantize_for(model, ctx);
    EngineOptions opt;
    opt.seed = seed;
    Engine engine(qm, ctx, opt);
    const auto run = engine.generate(prompt, 20);
    const bool rule = std::all_of(run.refreshes.begin(), run.refreshes.end(), [&](const RefreshEvent& e) {
      return !e.forced && e.budget_before <= tight.refresh_threshold;
    });
    const bool matches = run.tokens == Oracle(qm).generate(prompt, 20);
    ok = ok && rule && !run.refreshes.empty() && matches;
    notes.push_back("threshold " + std::to_string(tight.refresh_threshold) + ": " +
                    std::to_string(run.refreshes.size()) + " lazy events, all at budget <= threshold: " +
                    (rule ? "yes" : "no") + ", tokens match oracle: " + (matches ? "yes" : "no"));
  }
  return {"", ok, join(notes, "; ")};
}

/// Fixed-point GELU error on a dense grid of [-3.2, 3.2] and exact
/// passthrough outside; softmax sums and argmax on random score vectors.
inline CheckResult nonlinear_quality(int frac_bits, std::size_t vectors, std::uint64_t seed) {
  Context ctx(BackendParams::with_slots(64, seed));
  const FixedPointParams fp(frac_bits, ctx.modulus());
  const double range = gelu_fit::kRange;

  // GELU: every fixed-point input in [-8, 8], plus the real polynomial on a
  // 1e-4 grid.
  std::vector<Slot> xs;
  const std::int64_t lim = std::int64_t{8} << frac_bits;
  for (std::int64_t v = -lim; v <= lim; ++v) xs.push_back(zp::from_signed(v, fp.p));
  const auto ys = plain_gelu(xs, fp);
  double fixed_err = 0.0;
  std::size_t passthrough_bad = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = fp.decode(xs[i]);
    const auto y = zp::to_signed(ys[i], fp.p);
    if (std::abs(x) <= range) {
      fixed_err = std::max(fixed_err, std::abs(fp.decode(ys[i]) - gelu_reference(x)));
    } else if (y != (x > 0 ? zp::to_signed(xs[i], fp.p) : 0)) {
      ++passthrough_bad;
    }
  }
  double poly_err = 0.0;
  for (double x = -range; x <= range; x += 1e-4) poly_err = std::max(poly_err, std::abs(gelu_polynomial(x) - gelu_reference(x)));

  // Softmax.
  Prng rng(seed);
  std::size_t sum_bad = 0, argmax_checked = 0, argmax_bad = 0;
  const double lsb = std::ldexp(1.0, -frac_bits);
  const double gap_needed = std::ldexp(1.0, -(frac_bits - 4));
  for (std::size_t it = 0; it < vectors; ++it) {
    const std::size_t len = 2 + rng.uniform(63);
    std::vector<std::int64_t> raw(len);
    for (auto& v : raw) v = static_cast<std::int64_t>(rng.uniform(std::uint64_t{16} << frac_bits)) - (std::int64_t{8} << frac_bits);
    std::vector<Slot> in(len);
    for (std::size_t i = 0; i < len; ++i) in[i] = zp::from_signed(raw[i], fp.p);
    const auto out = plain_softmax(in, fp);
    double sum = 0.0;
    std::vector<std::int64_t> out_signed(len);
    for (std::size_t i = 0; i < len; ++i) {
      sum += fp.decode(out[i]);
      out_signed[i] = zp::to_signed(out[i], fp.p);
    }
    if (std::abs(sum - 1.0) > static_cast<double>(len) * lsb) ++sum_bad;
    auto sorted = raw;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    if (static_cast<double>(sorted[0] - sorted[1]) * lsb > gap_needed) {
      ++argmax_checked;
      if (argmax(out_signed) != argmax(raw)) ++argmax_bad;
    }
  }
  std::ostringstream os;
  os << "GELU max err fixed " << fixed_err << ", polynomial " << poly_err << ", passthrough violations "
     << passthrough_bad << "; softmax sum violations " << sum_bad << "/" << vectors << ", argmax mismatches "
     << argmax_bad << "/" << argmax_checked;
  const bool ok = fixed_err <= 1e-2 && poly_err <= 1e-2 && passthrough_bad == 0 && sum_bad == 0 && argmax_bad == 0 &&
                  argmax_checked > 0;
  return {"", ok, os.str()};
}

}  // namespace cryptogen::checks
