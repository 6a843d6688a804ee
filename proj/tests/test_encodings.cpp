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

#include <filesystem>

#include "cryptogen/encodings.hpp"
#include "cryptogen/matrix_io.hpp"
#include "support.hpp"

using namespace cryptogen;
using testing_support::random_matrix;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cryptogen_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Encodings, RoundTripEveryLayout) {
  Context ctx(BackendParams::with_slots(32, 1));
  Prng rng(9);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t r = 1 + rng.uniform(16), c = 1 + rng.uniform(16);
    const Matrix a = random_matrix(rng, r, c, ctx.modulus());
    const std::size_t w = pow2_ceil(r);
    const std::vector<Encoding> encs{Encoding::outer(r, c), Encoding::outer_blocked(r, c, 32 / w, w),
                                     Encoding::inner(r, c), Encoding::diagonal(r, c),
                                     Encoding::inner_compacted(r, c, 32)};
    for (const auto& e : encs) {
      for (bool enc : {true, false}) {
        const auto packed = encode(a, e, ctx, enc);
        EXPECT_EQ(packed.part_count(), e.part_count());
        EXPECT_EQ(decode(packed, ctx), a) << to_string(e.kind);
      }
    }
  }
}

TEST(Encodings, SlotPlacement) {
  Context ctx(BackendParams::with_slots(16, 1));
  Matrix a(3, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) a(i, j) = 10 * (i + 1) + j;
  // Outer: column j in part j, row i in slot i.
  const auto outer = encode(a, Layout::Outer, ctx, false);
  EXPECT_EQ(outer.plain()[1][2], 31U);
  // Inner: row i in part i.
  const auto inner = encode(a, Layout::Inner, ctx, false);
  EXPECT_EQ(inner.plain()[2][1], 31U);
  // Compacted: rows in blocks of width 2, eight rows per part.
  const auto comp = encode(a, Layout::InnerCompacted, ctx, false);
  EXPECT_EQ(comp.part_count(), 1U);
  EXPECT_EQ(comp.plain()[0][2 * 2 + 1], 31U);
  // Diagonal part k holds A[i, (i + k) mod d].
  const auto diag = encode(a, Layout::Diagonal, ctx, false);
  EXPECT_EQ(diag.plain()[1][0], a(0, 1));
  EXPECT_EQ(diag.plain()[1][1], a(1, 0));
}

TEST(Encodings, CompactedBlockCount) {
  // B = n / pow2(d); parts = ceil(rows / B).
  const auto e = Encoding::inner_compacted(21, 8, 64);
  EXPECT_EQ(e.per_part, 8U);
  EXPECT_EQ(e.part_count(), 3U);
  const auto odd = Encoding::inner_compacted(5, 5, 64);
  EXPECT_EQ(odd.block_width, 8U);
  EXPECT_EQ(odd.per_part, 8U);
}

TEST(Encodings, RejectsOversizedLayouts) {
  Context ctx(BackendParams::with_slots(16, 1));
  EXPECT_THROW(encode(Matrix(17, 2), Layout::Outer, ctx, true), DimensionError);
  EXPECT_THROW(encode(Matrix(2, 17), Layout::Inner, ctx, true), DimensionError);
  EXPECT_THROW(Encoding::inner_compacted(2, 17, 16), DimensionError);
  EXPECT_THROW(encode(Matrix(2, 3), Encoding::outer(3, 2), ctx, true), DimensionError);
}

TEST(Encodings, TileTokenReplicates) {
  Context ctx(BackendParams::with_slots(16, 1));
  const auto x = pack_token_inner(std::vector<Slot>{5, 6, 7}, ctx);
  const auto tiled = ctx.decrypt(tile_token(x, 4, 4, ctx)).values();
  for (std::size_t b = 0; b < 4; ++b) {
    EXPECT_EQ(tiled[4 * b], 5U);
    EXPECT_EQ(tiled[4 * b + 2], 7U);
    EXPECT_EQ(tiled[4 * b + 3], 0U);
  }
  EXPECT_THROW(tile_token(x, 8, 4, ctx), DimensionError);
}

TEST(MatrixIo, BinaryRoundTrip) {
  const auto dir = temp_dir("io");
  Prng rng(2);
  const Slot p = 1000003;
  const Matrix a = random_matrix(rng, 4, 7, p);
  io::save_matrix((dir / "a.bin").string(), a, p);
  Slot q = 0;
  EXPECT_EQ(io::load_matrix((dir / "a.bin").string(), &q), a);
  EXPECT_EQ(q, p);
  RealMatrix r(2, 3);
  r(1, 2) = -0.125;
  io::save_matrix((dir / "r.bin").string(), r);
  EXPECT_EQ(io::load_real_matrix((dir / "r.bin").string()), r);
}

TEST(MatrixIo, RejectsCorruptFiles) {
  const auto dir = temp_dir("io_bad");
  const Slot p = 1000003;
  io::save_matrix((dir / "a.bin").string(), Matrix(3, 3), p);
  auto bytes = io::detail::read_all((dir / "a.bin").string());
  bytes.resize(bytes.size() - 5);
  io::detail::write_all((dir / "t.bin").string(), bytes);
  EXPECT_THROW(io::load_matrix((dir / "t.bin").string()), FormatError);
  bytes = io::detail::read_all((dir / "a.bin").string());
  bytes[0] ^= 0xFF;
  io::detail::write_all((dir / "m.bin").string(), bytes);
  EXPECT_THROW(io::load_matrix((dir / "m.bin").string()), FormatError);
  EXPECT_THROW(io::load_matrix((dir / "missing.bin").string()), FormatError);
}

TEST(MatrixIo, JsonForms) {
  Matrix a(2, 2);
  a(0, 1) = 3;
  a(1, 0) = 4;
  EXPECT_EQ(io::matrix_from_json(io::to_json_value(a, 7)), a);
  EXPECT_EQ(io::matrix_from_json(nlohmann::json::parse("[[0,3],[4,0]]")), a);
  EXPECT_THROW(io::matrix_from_json(nlohmann::json::parse("[[0,3],[4]]")), FormatError);
}
