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

#include <cmath>

#include "cryptogen/mpc.hpp"
#include "cryptogen/nonlinear.hpp"
#include "support.hpp"

using namespace cryptogen;
using testing_support::signed_of;

namespace {

const Slot kP = BackendParams::with_slots(64).plain_modulus;

FixedPointParams fp8() { return FixedPointParams(8, kP); }

std::vector<Slot> encode_all(const FixedPointParams& fp, const std::vector<double>& v) { return fp.encode(v); }

std::vector<double> random_reals(Prng& rng, std::size_t len, double lo, double hi) {
  std::vector<double> v(len);
  for (auto& x : v) x = lo + (hi - lo) * rng.unit();
  return v;
}

}  // namespace

TEST(FixedPoint, EncodeDecode) {
  const auto fp = fp8();
  EXPECT_EQ(fp.encode(1.0), 256U);
  EXPECT_EQ(signed_of(fp.encode(-0.5), kP), -128);
  EXPECT_DOUBLE_EQ(fp.decode(fp.encode(-3.25)), -3.25);
  EXPECT_THROW(FixedPointParams(12, 1000003), OverflowError);
  EXPECT_THROW(FixedPointParams(0, kP), ParamError);
}

TEST(FixedPoint, TruncIsFloor) {
  PlainDomain d(kP);
  for (std::int64_t v : {-513L, -512L, -1L, 0L, 1L, 255L, 256L, 1000L}) {
    const auto r = d.trunc({zp::from_signed(v, kP)}, 8);
    const auto expect = static_cast<std::int64_t>(std::floor(static_cast<double>(v) / 256.0));
    EXPECT_EQ(signed_of(r[0], kP), expect) << v;
  }
}

TEST(FixedPoint, ComparisonAndBits) {
  PlainDomain d(kP);
  const auto lt = d.ltz({zp::from_signed(-3, kP), 0, 5});
  EXPECT_EQ(lt, (std::vector<Slot>{1, 0, 0}));
  const auto bits = d.bit_decompose({6}, 3);
  EXPECT_EQ(bits[0][0], 0U);
  EXPECT_EQ(bits[1][0], 1U);
  EXPECT_EQ(bits[2][0], 1U);
}

TEST(FixedPoint, NormalizeAndShift) {
  PlainDomain d(kP);
  // 40 = 1.25 * 2^5; mantissa at 10 fraction bits.
  const auto [m, e] = d.normalize({40}, 10, 1, 0);
  EXPECT_EQ(m[0], 1280U);
  EXPECT_EQ(e[0], 5U);
  // Step 2: value = M * 4^e with M in [1, 4).
  const auto [m2, e2] = d.normalize({40}, 10, 2, 0);
  EXPECT_EQ(m2[0], 2560U);
  EXPECT_EQ(e2[0], 2U);
  // Shift: positive amounts shift left, negative right (floor or rounded).
  const Slot minus_one = zp::from_signed(-1, kP);
  EXPECT_EQ(d.shift({7}, {2}, true)[0], 28U);
  EXPECT_EQ(d.shift({7}, {minus_one}, true)[0], 4U);
  EXPECT_EQ(d.shift({7}, {minus_one}, false)[0], 3U);
}

TEST(Nonlinear, GeluMatchesReferenceOnGrid) {
  const auto fp = fp8();
  std::vector<double> xs;
  for (double x = -6.0; x <= 6.0; x += 1.0 / 256.0) xs.push_back(x);
  const auto ys = plain_gelu(encode_all(fp, xs), fp);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = fp.decode(fp.encode(xs[i]));
    const double y = fp.decode(ys[i]);
    if (std::abs(x) > 3.2) {
      EXPECT_EQ(y, x > 0 ? x : 0.0) << x;
    } else {
      EXPECT_NEAR(y, gelu_reference(x), 1e-2) << x;
    }
  }
  EXPECT_EQ(plain_gelu({0}, fp)[0], 0U);
}

TEST(Nonlinear, GeluPolynomialErrorBound) {
  double worst = 0.0;
  for (double x = -3.2; x <= 3.2; x += 1e-4) worst = std::max(worst, std::abs(gelu_polynomial(x) - gelu_reference(x)));
  EXPECT_LE(worst, gelu_fit::kMaxAbsError + 1e-6);
  EXPECT_LE(worst, 1e-2);
}

TEST(Nonlinear, SoftmaxProperties) {
  const auto fp = fp8();
  Prng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + rng.uniform(40);
    const auto xs = random_reals(rng, len, -6.0, 6.0);
    const auto out = plain_softmax(encode_all(fp, xs), fp);
    double sum = 0.0, ref_sum = 0.0, mx = -1e9;
    for (double x : xs) mx = std::max(mx, fp.decode(fp.encode(x)));
    for (double x : xs) ref_sum += std::exp(fp.decode(fp.encode(x)) - mx);
    for (std::size_t i = 0; i < len; ++i) {
      const double y = fp.decode(out[i]);
      EXPECT_GE(y, 0.0);
      EXPECT_NEAR(y, std::exp(fp.decode(fp.encode(xs[i])) - mx) / ref_sum, 0.03);
      sum += y;
    }
    EXPECT_LE(std::abs(sum - 1.0), static_cast<double>(len) / 256.0);
  }
}

TEST(Nonlinear, SoftmaxShiftInvariant) {
  // Adding a constant to every input leaves the output unchanged exactly.
  const auto fp = fp8();
  Prng rng(6);
  PlainDomain d(kP);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = encode_all(fp, random_reals(rng, 9, -4.0, 4.0));
    const auto shifted = d.add_const(x, static_cast<std::int64_t>(rng.uniform(1000)) - 500);
    EXPECT_EQ(plain_softmax(x, fp), plain_softmax(shifted, fp));
  }
}

TEST(Nonlinear, CausalMaskZeroesWeights) {
  const auto fp = fp8();
  PlainDomain d(kP);
  std::vector<std::int64_t> bias{0, 0, causal_mask_constant(fp), causal_mask_constant(fp)};
  const auto out = plain_softmax(d.add_const(encode_all(fp, {2.0, 1.0, 5.0, 0.0}), bias), fp);
  EXPECT_EQ(out[2], 0U);
  EXPECT_EQ(out[3], 0U);
}

TEST(Nonlinear, LayerNormMatchesFloat) {
  const auto fp = fp8();
  Prng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 2 + rng.uniform(63);
    const double scale = 0.1 + 8.0 * rng.unit();
    const auto xs = random_reals(rng, len, -scale, scale);
    std::vector<std::int64_t> gamma(len), beta(len);
    for (std::size_t i = 0; i < len; ++i) {
      gamma[i] = FixedPointParams::quantize(0.5 + rng.unit(), 8);
      beta[i] = FixedPointParams::quantize(rng.unit() - 0.5, 8);
    }
    const auto out = plain_layernorm(encode_all(fp, xs), gamma, beta, fp);
    std::vector<double> q(len);
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < len; ++i) mean += (q[i] = fp.decode(fp.encode(xs[i])));
    mean /= static_cast<double>(len);
    for (double v : q) var += (v - mean) * (v - mean);
    var /= static_cast<double>(len);
    for (std::size_t i = 0; i < len; ++i) {
      const double ref = static_cast<double>(gamma[i]) / 256.0 * (q[i] - mean) / std::sqrt(var + 1.0 / 256.0) +
                         static_cast<double>(beta[i]) / 256.0;
      EXPECT_NEAR(fp.decode(out[i]), ref, 0.06) << "len " << len << " scale " << scale;
    }
  }
}

TEST(Nonlinear, ReciprocalConverges) {
  PlainDomain d(kP);
  const int bits = protocols::reciprocal_bits(fp8());
  for (Slot v : {1ULL, 3ULL, 100ULL, 255ULL, 4096ULL, 99999ULL}) {
    const auto [w, k] = protocols::reciprocal(d, std::vector<Slot>{v}, bits, 4);
    const double approx = static_cast<double>(w[0]) / std::ldexp(1.0, bits) / std::ldexp(1.0, static_cast<int>(k[0]));
    EXPECT_NEAR(approx * static_cast<double>(v), 1.0, 2e-3) << v;
  }
}

TEST(Mpc, SharesReconstruct) {
  MpcChannel ch(kP, 1);
  ShareDomain d(ch);
  const std::vector<Slot> secret{1, 2, kP - 1, 0};
  const auto s = d.share(secret);
  EXPECT_EQ(s.reconstruct(kP), secret);
  EXPECT_NE(s.server, secret);
}

TEST(Mpc, ShareDomainEqualsPlainDomain) {
  // Every protocol produces the same residues on shares as in the clear.
  const auto fp = fp8();
  Prng rng(8);
  MpcChannel ch(kP, 2);
  ShareDomain sd(ch);
  for (int trial = 0; trial < 30; ++trial) {
    const auto x = encode_all(fp, random_reals(rng, 12, -5.0, 5.0));
    const auto s = sd.share(x);
    EXPECT_EQ(mpc_gelu(s, fp, ch).reconstruct(kP), plain_gelu(x, fp));
    EXPECT_EQ(mpc_softmax(s, fp, ch).reconstruct(kP), plain_softmax(x, fp));
    std::vector<std::int64_t> g(12, 256), b(12, 3);
    EXPECT_EQ(mpc_layernorm(s, g, b, fp, ch).reconstruct(kP), plain_layernorm(x, g, b, fp));
    EXPECT_EQ(truncate(s, fp, ch).reconstruct(kP), PlainDomain(kP).trunc(x, 8));
  }
}

TEST(Mpc, ChargesDependOnShapeOnly) {
  const auto fp = fp8();
  Prng rng(9);
  std::uint64_t bytes = 0, rounds = 0;
  for (int trial = 0; trial < 5; ++trial) {
    MpcChannel ch(kP, trial);
    ShareDomain sd(ch);
    (void)mpc_softmax(sd.share(encode_all(fp, random_reals(rng, 16, -5.0, 5.0))), fp, ch);
    if (trial == 0) {
      bytes = ch.bytes_sent();
      rounds = ch.rounds();
      EXPECT_GT(bytes, 0U);
    }
    EXPECT_EQ(ch.bytes_sent(), bytes);
    EXPECT_EQ(ch.rounds(), rounds);
  }
}

TEST(Mpc, ConversionsRoundTrip) {
  Context ctx(BackendParams::with_slots(16, 1));
  MpcChannel ch(ctx.modulus(), 3, &ctx);
  Prng rng(4);
  const auto v = rng.uniform_vector(16, ctx.modulus());
  const auto ct = ctx.encrypt(ctx.plain(v));
  const auto s = he_to_shares(ct, ctx, ch, 10);
  EXPECT_EQ(s.size(), 10U);
  EXPECT_EQ(s.reconstruct(ctx.modulus()), std::vector<Slot>(v.begin(), v.begin() + 10));
  const auto back = ctx.decrypt(shares_to_he(s, ctx, ch)).values();
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(back[i], i < 10 ? v[i] : 0U);
  EXPECT_EQ(ctx.counters().mpc_bytes, 2 * ctx.ciphertext_bytes());
  EXPECT_EQ(shares_to_he(s, ctx, ch).noise_budget(), ctx.params().initial_noise_budget);
}

TEST(Mpc, MaskedOpeningLooksUniform) {
  // The client's view of an opened value is value - r with uniform r:
  // a chi-square test over 16 buckets on a constant secret.
  Context ctx(BackendParams::with_slots(64, 1));
  MpcChannel ch(ctx.modulus(), 7, &ctx);
  const auto ct = ctx.encrypt(ctx.plain(std::vector<Slot>(64, 12345)));
  std::vector<double> counts(16, 0.0);
  const int draws = 200;
  for (int t = 0; t < draws; ++t) {
    for (Slot v : he_to_shares(ct, ctx, ch).client) counts[v * 16 / ctx.modulus()] += 1.0;
  }
  const double expected = draws * 64.0 / 16.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 37.7);  // 15 degrees of freedom, p = 0.001
}
