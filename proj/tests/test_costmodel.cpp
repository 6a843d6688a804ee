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

#include "cryptogen/costmodel.hpp"
#include "cryptogen/verify.hpp"

using namespace cryptogen;

namespace {

// Published constants at m=128, d1=768, d2=64, n=8192, k=5, in table order:
// Mult, Rot, Ct; each Prefill, Gen, Total.
struct Published {
  Method method;
  std::array<std::uint64_t, 9> cells;
};

const std::array<Published, 5> kPublished{{
    {Method::Gazelle, {98304, 491520, 589824, 96768, 483840, 580608, 1664, 8320, 9984}},
    {Method::IRON, {768, 3840, 4608, 0, 0, 0, 56, 280, 336}},
    {Method::BOLT, {768, 3840, 4608, 43, 215, 258, 12, 60, 72}},
    {Method::THOR, {9908, 49540, 59448, 282, 1410, 1692, 13, 65, 78}},
    {Method::CryptoGen, {768, 64 * 5, 1088, 43, 25, 68, 12, 1 * 5, 17}},
}};

const CostCell& cell_of(const CostTriple& t, int metric) { return metric == 0 ? t.mult : metric == 1 ? t.rot : t.ct; }

std::uint64_t cdiv(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::uint64_t p2(std::uint64_t v) {
  std::uint64_t r = 1;
  while (r < v) r *= 2;
  return r;
}

}  // namespace

TEST(CostModel, PublishedCellsAreReproducedOrFlagged) {
  const CostDims dims;
  std::size_t flagged = 0;
  for (const auto& row : kPublished) {
    for (int stage = 0; stage < 3; ++stage) {
      const auto t = predict_costs(row.method, static_cast<Stage>(stage), dims);
      for (int metric = 0; metric < 3; ++metric) {
        const auto& c = cell_of(t, metric);
        const auto published = row.cells[static_cast<std::size_t>(metric * 3 + stage)];
        if (c.reproduced()) {
          EXPECT_EQ(c.value, published) << to_string(row.method) << " " << metric << " " << stage;
        } else {
          EXPECT_EQ(*c.reported, published);
          EXPECT_NE(c.value, published);
          ++flagged;
        }
      }
    }
  }
  EXPECT_EQ(reported_only_cells(cost_table(dims)).size(), flagged);
}

TEST(CostModel, ClosedFormsAtPublishedDims) {
  // Values computed here from the printed asymptotic forms with constant 1.
  const std::uint64_t m = 128, d1 = 768, d2 = 64, n = 8192, k = 5;
  const CostDims dims;
  auto pre = [&](Method x) { return predict_costs(x, Stage::Prefill, dims); };
  auto gen = [&](Method x) { return predict_costs(x, Stage::Gen, dims); };
  EXPECT_EQ(pre(Method::Gazelle).mult.value, m * d1);
  EXPECT_EQ(pre(Method::Gazelle).ct.value, m * d1 / d2);
  EXPECT_EQ(pre(Method::IRON).mult.value, m * d1 * d2 / n);
  EXPECT_EQ(pre(Method::IRON).ct.value, static_cast<std::uint64_t>(std::llround(std::sqrt(768.0))));
  EXPECT_EQ(pre(Method::BOLT).rot.value, static_cast<std::uint64_t>(std::llround(m * d1 * 8.0 / n)));
  EXPECT_EQ(pre(Method::BOLT).ct.value, cdiv(m * (d1 + d2), n));
  EXPECT_EQ(pre(Method::THOR).rot.value, d2 + cdiv(m * d1, n));
  EXPECT_EQ(gen(Method::BOLT).mult.value, k * m * d1 * d2 / n);
  EXPECT_EQ(gen(Method::CryptoGen).mult.value, std::min(p2(d1), p2(d2)) * k);
  EXPECT_EQ(gen(Method::CryptoGen).ct.value, cdiv(d1, n) * k);
  EXPECT_EQ(gen(Method::CryptoGen).rot.value, 10 * k);  // ceil(log2 768) = 10
  const std::uint64_t g = n / p2(m);
  EXPECT_EQ(pre(Method::CryptoGen).mult.value, cdiv(d1, g) * p2(d2));
  EXPECT_EQ(pre(Method::CryptoGen).ct.value, cdiv(d1, g));
}

TEST(CostModel, TotalsAddUp) {
  for (const CostDims& d : {CostDims{}, CostDims{16, 64, 8, 1024, 3}, CostDims{100, 300, 20, 4096, 9}}) {
    for (auto m : kAllMethods) {
      const auto p = predict_costs(m, Stage::Prefill, d), g = predict_costs(m, Stage::Gen, d),
                 t = predict_costs(m, Stage::Total, d);
      for (int metric = 0; metric < 3; ++metric) {
        EXPECT_EQ(cell_of(t, metric).value, cell_of(p, metric).value + cell_of(g, metric).value);
      }
    }
  }
}

TEST(CostModel, PureAndDeterministic) {
  const CostDims d{64, 256, 32, 2048, 7};
  for (auto m : kAllMethods) {
    const auto a = predict_costs(m, Stage::Total, d);
    const auto b = predict_costs(m, Stage::Total, 64, 256, 32, 2048, 7);
    EXPECT_EQ(a.mult.value, b.mult.value);
    EXPECT_EQ(a.rot.value, b.rot.value);
    EXPECT_EQ(a.ct.value, b.ct.value);
    // Off the published dims nothing is flagged.
    EXPECT_TRUE(a.mult.reproduced() && a.rot.reproduced() && a.ct.reproduced());
  }
  EXPECT_EQ(cost_table_csv(cost_table(d)), cost_table_csv(cost_table(d)));
}

TEST(CostModel, GenGrowsLinearlyInK) {
  for (auto m : kAllMethods) {
    const auto one = predict_costs(m, Stage::Gen, CostDims{128, 768, 64, 8192, 1});
    const auto ten = predict_costs(m, Stage::Gen, CostDims{128, 768, 64, 8192, 10});
    EXPECT_EQ(ten.mult.value, 10 * one.mult.value);
    EXPECT_EQ(ten.ct.value, 10 * one.ct.value);
  }
  // Only CryptoGen decode is independent of the prompt length.
  const auto a = predict_costs(Method::CryptoGen, Stage::Gen, CostDims{16, 768, 64, 8192, 5});
  const auto b = predict_costs(Method::CryptoGen, Stage::Gen, CostDims{1024, 768, 64, 8192, 5});
  EXPECT_EQ(a.mult.value, b.mult.value);
  EXPECT_LT(predict_costs(Method::BOLT, Stage::Gen, CostDims{16, 768, 64, 8192, 5}).mult.value,
            predict_costs(Method::BOLT, Stage::Gen, CostDims{1024, 768, 64, 8192, 5}).mult.value);
}

TEST(CostModel, PrefillMultMatchesInstrumentedKernel) {
  for (const CostDims& d : {CostDims{8, 32, 8, 64, 1}, CostDims{16, 48, 16, 256, 1}, CostDims{4, 20, 4, 64, 1}}) {
    const auto measured = measure_cpmm(d.m, d.d1, d.d2, d.n);
    const auto predicted = predict_costs(Method::CryptoGen, Stage::Prefill, d).mult.value;
    // The kernel adds one mask multiply when a part has spare column groups.
    const std::uint64_t g = d.n / p2(d.m);
    EXPECT_EQ(measured.mult_plain, predicted + (g > p2(d.d2) ? 1 : 0)) << d.m << " " << d.d1 << " " << d.d2;
  }
}

TEST(CostModel, MethodNames) {
  EXPECT_EQ(method_from_string("bolt"), Method::BOLT);
  EXPECT_EQ(method_from_string("CryptoGen"), Method::CryptoGen);
  EXPECT_EQ(method_from_string("thor"), Method::THOR);
  try {
    (void)method_from_string("nope");
    FAIL() << "expected ParamError";
  } catch (const ParamError& e) {
    EXPECT_NE(std::string(e.what()).find("Gazelle"), std::string::npos);
  }
  EXPECT_THROW(predict_costs(Method::BOLT, Stage::Gen, CostDims{0, 1, 1, 64, 1}), ParamError);
  EXPECT_THROW(predict_costs(Method::BOLT, Stage::Gen, CostDims{8, 1, 1, 100, 1}), ParamError);
}

TEST(CostModel, AttentionOrders) {
  EXPECT_EQ(predict_attention_costs(Method::CryptoGen, Stage::Gen).ctct_degree, 1);
  EXPECT_EQ(predict_attention_costs(Method::CryptoGen, Stage::Gen).rot_order, "O(log d)");
  EXPECT_EQ(predict_attention_costs(Method::BOLT, Stage::Gen).ctct_degree, 2);
  EXPECT_EQ(predict_attention_costs(Method::THOR, Stage::Prefill).ctct_order, "O(m^2)");
  EXPECT_THROW(predict_attention_costs(Method::Gazelle, Stage::Gen), ParamError);
  EXPECT_THROW(predict_attention_costs(Method::IRON, Stage::Prefill), ParamError);
}

TEST(CostModel, RegressionHelpers) {
  EXPECT_NEAR(loglog_slope({1, 2, 4, 8}, {3, 12, 48, 192}), 2.0, 1e-12);
  EXPECT_NEAR(loglog_slope({8, 16, 32}, {5, 10, 20}), 1.0, 1e-12);
  const auto c = quadratic_fit({0, 1, 2, 3, 4}, {1, 2.5, 7, 14.5, 25});
  EXPECT_NEAR(c[0], 1.0, 1e-9);
  EXPECT_NEAR(c[1], 0.0, 1e-9);
  EXPECT_NEAR(c[2], 1.5, 1e-9);
  EXPECT_THROW(loglog_slope({1}, {1}), DimensionError);
  EXPECT_THROW(loglog_slope({1, 2}, {0, 1}), DimensionError);
  EXPECT_THROW(quadratic_fit({1, 1, 1}, {1, 2, 3}), DimensionError);
}

TEST(CostModel, TableRendering) {
  const auto rows = cost_table(CostDims{});
  const auto csv = cost_table_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 5 * 9);
  EXPECT_NE(csv.find("reported-only"), std::string::npos);
  const auto md = cost_table_markdown(rows, CostDims{});
  EXPECT_NE(md.find("| CryptoGen |"), std::string::npos);
  EXPECT_NE(md.find("O(log d)"), std::string::npos);
}

TEST(CostModel, ValidationAgainstSyntheticRuns) {
  // Synthetic reports built by hand: per-step mult_cipher 10 and cache
  // counters following ceil(t / B) with B = 64 / 8.
  auto make = [](std::size_t prompt, std::size_t steps, std::uint64_t per_step) {
    RunReport r;
    r.prompt.assign(prompt, 1);
    for (std::size_t s = 0; s <= steps; ++s) {
      StepReport sr;
      sr.step = s;
      sr.ops.mult_cipher = s == 0 ? 1000 * prompt : per_step;
      sr.cache_cts = (s + 7) / 8;
      r.steps.push_back(sr);
    }
    return r;
  };
  const auto good = validate_against_counts({make(4, 32, 10), make(9, 32, 10)}, 64, 8);
  EXPECT_TRUE(good.ok());
  EXPECT_EQ(good.checks.size(), 5U);

  auto bad_cache = make(4, 32, 10);
  bad_cache.steps[9].cache_cts = 1;
  EXPECT_FALSE(validate_against_counts({bad_cache}, 64, 8).ok());
  EXPECT_FALSE(validate_against_counts({make(4, 32, 10), make(9, 32, 11)}, 64, 8).ok());

  // Per-step cost growing with t gives a super-linear exponent.
  auto quad = make(4, 64, 0);
  for (auto& s : quad.steps) s.ops.mult_cipher = 1 + 4 * s.step;
  EXPECT_FALSE(validate_against_counts({quad}, 64, 8).ok());
  EXPECT_THROW(validate_against_counts({}, 64, 8), DimensionError);
}
