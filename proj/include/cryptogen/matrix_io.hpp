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

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cryptogen/errors.hpp"
#include "cryptogen/matrix.hpp"
#include "json.hpp"

namespace cryptogen::io {

// Binary matrix file: 8 little-endian 64-bit header words
//   [magic, rows, cols, p, element_kind, version, 0, 0]
// followed by rows*cols little-endian 64-bit words in row-major order.
// element_kind 0 stores Z_p residues (p is the modulus); kind 1 stores
// IEEE-754 binary64 bit patterns (p is 0).
inline constexpr std::uint64_t kMatrixMagic = 0x58544D47544E5943ULL;  // "CYNTGMTX"
inline constexpr std::uint64_t kFormatVersion = 1;

enum class ElementKind : std::uint64_t { Residue = 0, Float64 = 1 };

namespace detail {

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

inline std::uint64_t get_u64(const unsigned char* in) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(in[b]) << (8 * b);
  return v;
}

inline std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path);
}

inline std::vector<unsigned char> encode_words(std::uint64_t rows, std::uint64_t cols, std::uint64_t p,
                                               ElementKind kind, const std::vector<std::uint64_t>& words) {
  std::vector<unsigned char> out;
  out.reserve(64 + 8 * words.size());
  for (std::uint64_t h : std::array<std::uint64_t, 8>{kMatrixMagic, rows, cols, p,
                                                      static_cast<std::uint64_t>(kind), kFormatVersion, 0, 0}) {
    put_u64(out, h);
  }
  for (std::uint64_t w : words) put_u64(out, w);
  return out;
}

struct Decoded {
  std::uint64_t rows = 0, cols = 0, p = 0;
  ElementKind kind = ElementKind::Residue;
  std::vector<std::uint64_t> words;
};

inline Decoded decode_words(const std::vector<unsigned char>& bytes, const std::string& what) {
  if (bytes.size() < 64) throw FormatError(what + ": truncated header");
  Decoded d;
  if (get_u64(bytes.data()) != kMatrixMagic) throw FormatError(what + ": bad magic");
  d.rows = get_u64(bytes.data() + 8);
  d.cols = get_u64(bytes.data() + 16);
  d.p = get_u64(bytes.data() + 24);
  const auto kind = get_u64(bytes.data() + 32);
  if (kind > 1) throw FormatError(what + ": unknown element kind");
  d.kind = static_cast<ElementKind>(kind);
  if (get_u64(bytes.data() + 40) != kFormatVersion) throw FormatError(what + ": unsupported version");
  if (d.cols != 0 && d.rows > (bytes.size() / 8) / d.cols) throw FormatError(what + ": shape exceeds payload");
  const std::uint64_t count = d.rows * d.cols;
  if (bytes.size() != 64 + 8 * count) throw FormatError(what + ": payload size does not match shape");
  d.words.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) d.words[i] = get_u64(bytes.data() + 64 + 8 * i);
  return d;
}

}  // namespace detail

inline std::vector<unsigned char> to_bytes(const Matrix& m, Slot p) {
  return detail::encode_words(m.rows(), m.cols(), p, ElementKind::Residue, m.data());
}

inline std::vector<unsigned char> to_bytes(const RealMatrix& m) {
  std::vector<std::uint64_t> words(m.data().size());
  for (std::size_t i = 0; i < words.size(); ++i) words[i] = std::bit_cast<std::uint64_t>(m.data()[i]);
  return detail::encode_words(m.rows(), m.cols(), 0, ElementKind::Float64, words);
}

/// Parses a residue matrix; every entry must be below the stored modulus.
inline Matrix matrix_from_bytes(const std::vector<unsigned char>& bytes, Slot* modulus = nullptr,
                                const std::string& what = "matrix") {
  auto d = detail::decode_words(bytes, what);
  if (d.kind != ElementKind::Residue) throw FormatError(what + ": expected residue matrix");
  for (auto w : d.words) {
    if (d.p != 0 && w >= d.p) throw FormatError(what + ": entry not reduced modulo p");
  }
  if (modulus) *modulus = d.p;
  return Matrix(d.rows, d.cols, std::move(d.words));
}

inline RealMatrix real_matrix_from_bytes(const std::vector<unsigned char>& bytes,
                                         const std::string& what = "matrix") {
  auto d = detail::decode_words(bytes, what);
  if (d.kind != ElementKind::Float64) throw FormatError(what + ": expected float64 matrix");
  std::vector<double> data(d.words.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<double>(d.words[i]);
  return RealMatrix(d.rows, d.cols, std::move(data));
}

inline void save_matrix(const std::string& path, const Matrix& m, Slot p) { detail::write_all(path, to_bytes(m, p)); }

inline void save_matrix(const std::string& path, const RealMatrix& m) { detail::write_all(path, to_bytes(m)); }

inline Matrix load_matrix(const std::string& path, Slot* modulus = nullptr) {
  return matrix_from_bytes(detail::read_all(path), modulus, path);
}

inline RealMatrix load_real_matrix(const std::string& path) {
  return real_matrix_from_bytes(detail::read_all(path), path);
}

/// JSON form: {"rows": m, "cols": d, "p": p, "data": [[...], ...]}.
inline nlohmann::json to_json_value(const Matrix& m, Slot p) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    rows.push_back(std::vector<Slot>(r.begin(), r.end()));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"p", p}, {"data", rows}};
}

/// Accepts either the object form above or a bare array of rows.
inline Matrix matrix_from_json(const nlohmann::json& j) {
  try {
    const auto& data = j.is_array() ? j : j.at("data");
    const std::size_t rows = data.size();
    const std::size_t cols = rows == 0 ? (j.is_object() ? j.value("cols", std::size_t{0}) : 0) : data[0].size();
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      if (data[i].size() != cols) throw FormatError("ragged matrix in JSON");
      for (std::size_t c = 0; c < cols; ++c) m(i, c) = data[i][c].get<Slot>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("matrix JSON: ") + e.what());
  }
}

}  // namespace cryptogen::io
