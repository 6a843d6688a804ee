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
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cryptogen/errors.hpp"
#include "cryptogen/modular.hpp"

namespace cryptogen {

/// Dense row-major matrix.
template <class T>
class MatrixOf {
 public:
  using value_type = T;

  MatrixOf() = default;
  MatrixOf(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  MatrixOf(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw DimensionError("matrix data does not match its shape");
  }
  MatrixOf(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<T> column(std::size_t j) const {
    std::vector<T> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

  MatrixOf transpose() const {
    MatrixOf t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  /// Rows [begin, end).
  MatrixOf row_range(std::size_t begin, std::size_t end) const {
    return MatrixOf(end - begin, cols_,
                    std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                                   data_.begin() + static_cast<std::ptrdiff_t>(end * cols_)));
  }

  /// Columns [begin, end).
  MatrixOf col_range(std::size_t begin, std::size_t end) const {
    MatrixOf out(rows_, end - begin);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = (*this)(i, j);
    return out;
  }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  friend bool operator==(const MatrixOf&, const MatrixOf&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Matrix over Z_p.
using Matrix = MatrixOf<Slot>;
/// Real-valued matrix (unquantized weights, float references).
using RealMatrix = MatrixOf<double>;

/// Plain product A * B over Z_p.
inline Matrix multiply_mod(const Matrix& a, const Matrix& b, Slot p) {
  if (a.cols() != b.rows()) throw DimensionError("matrix product shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Slot aik = a(i, k);
      if (aik == 0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) = zp::add(out(i, j), zp::mul(aik, b(k, j), p), p);
    }
  }
  return out;
}

/// Row vector times matrix over Z_p.
inline std::vector<Slot> vecmat_mod(std::span<const Slot> x, const Matrix& w, Slot p) {
  if (x.size() != w.rows()) throw DimensionError("vector-matrix shape mismatch");
  std::vector<Slot> out(w.cols(), 0);
  for (std::size_t k = 0; k < w.rows(); ++k) {
    if (x[k] == 0) continue;
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] = zp::add(out[j], zp::mul(x[k], w(k, j), p), p);
  }
  return out;
}

}  // namespace cryptogen
