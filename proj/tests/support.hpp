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

// Independent reference arithmetic for the tests. Nothing here calls the
// library's own matrix helpers.

#include <cstdint>
#include <vector>

#include "cryptogen/backend.hpp"
#include "cryptogen/matrix.hpp"
#include "cryptogen/modular.hpp"

namespace testing_support {

using cryptogen::Matrix;
using cryptogen::Slot;

inline Slot mulmod(Slot a, Slot b, Slot p) {
  return static_cast<Slot>((static_cast<unsigned __int128>(a) * b) % p);
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b, Slot p) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      unsigned __int128 acc = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += static_cast<unsigned __int128>(a(i, k)) * b(k, j);
      out(i, j) = static_cast<Slot>(acc % p);
    }
  }
  return out;
}

inline std::vector<Slot> naive_vecmat(const std::vector<Slot>& x, const Matrix& b, Slot p) {
  Matrix a(1, x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a(0, i) = x[i];
  const Matrix r = naive_matmul(a, b, p);
  return {r.row(0).begin(), r.row(0).end()};
}

inline Matrix random_matrix(cryptogen::Prng& rng, std::size_t r, std::size_t c, Slot p) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.uniform(p);
  return m;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline std::int64_t signed_of(Slot x, Slot p) {
  return x > p / 2 ? static_cast<std::int64_t>(x) - static_cast<std::int64_t>(p) : static_cast<std::int64_t>(x);
}

}  // namespace testing_support
