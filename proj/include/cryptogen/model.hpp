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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cryptogen/arcc.hpp"
#include "cryptogen/errors.hpp"
#include "cryptogen/fixed_point.hpp"
#include "cryptogen/matrix.hpp"
#include "cryptogen/matrix_io.hpp"
#include "cryptogen/nonlinear.hpp"
#include "json.hpp"

namespace cryptogen {

/// Decoder-only transformer shape (pre-LayerNorm, learned absolute
/// positions, unembedding tied to the token embedding).
struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden = 32;  // d1
  std::size_t heads = 4;    // H
  std::size_t ffn = 64;
  std::size_t vocab = 64;
  std::size_t max_seq = 1024;
  int frac_bits = 8;

  std::size_t head_dim() const { return heads == 0 ? 0 : hidden / heads; }

  void validate() const {
    if (layers == 0 || hidden == 0 || heads == 0 || ffn == 0 || vocab == 0 || max_seq == 0) {
      throw ParamError("model dimensions must be positive");
    }
    if (hidden % heads != 0) {
      throw ParamError("hidden size " + std::to_string(hidden) + " is not divisible by " + std::to_string(heads) +
                       " heads");
    }
    if (!is_pow2(head_dim())) throw ParamError("head dimension must be a power of two");
  }

  /// Dimensions the emulated slot count must accommodate.
  void check_slots(std::size_t n_slots) const {
    for (auto [name, v] : {std::pair{"hidden", hidden}, {"ffn", ffn}, {"vocab", vocab}}) {
      if (pow2_ceil(v) > n_slots) {
        throw DimensionError(std::string(name) + " size " + std::to_string(v) + " exceeds " + std::to_string(n_slots) +
                             " slots");
      }
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"layers", c.layers}, {"hidden", c.hidden}, {"heads", c.heads},         {"ffn", c.ffn},
       {"vocab", c.vocab},   {"max_seq", c.max_seq}, {"frac_bits", c.frac_bits}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.layers = j.at("layers").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn = j.at("ffn").get<std::size_t>();
  c.vocab = j.at("vocab").get<std::size_t>();
  c.max_seq = j.at("max_seq").get<std::size_t>();
  c.frac_bits = j.value("frac_bits", 8);
}

/// Real-valued weights by name. Vectors are stored as 1 x d matrices.
struct Model {
  ModelConfig config;
  std::map<std::string, RealMatrix> tensors;

  const RealMatrix& tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("model is missing tensor '" + name + "'");
    return it->second;
  }
};

inline std::string layer_tensor(std::size_t layer, const char* name) {
  return "layer" + std::to_string(layer) + "." + name;
}

/// Expected shape of every tensor.
inline std::map<std::string, std::pair<std::size_t, std::size_t>> tensor_shapes(const ModelConfig& c) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> s;
  s["wte"] = {c.vocab, c.hidden};
  s["wpe"] = {c.max_seq, c.hidden};
  s["lnf_g"] = {1, c.hidden};
  s["lnf_b"] = {1, c.hidden};
  for (std::size_t l = 0; l < c.layers; ++l) {
    for (const char* v : {"ln1_g", "ln1_b", "ln2_g", "ln2_b", "b_q", "b_k", "b_v", "b_o", "b_2"}) {
      s[layer_tensor(l, v)] = {1, c.hidden};
    }
    for (const char* w : {"w_q", "w_k", "w_v", "w_o"}) s[layer_tensor(l, w)] = {c.hidden, c.hidden};
    s[layer_tensor(l, "w_1")] = {c.hidden, c.ffn};
    s[layer_tensor(l, "b_1")] = {1, c.ffn};
    s[layer_tensor(l, "w_2")] = {c.ffn, c.hidden};
  }
  return s;
}

inline void validate_model(const Model& m) {
  m.config.validate();
  const auto shapes = tensor_shapes(m.config);
  for (const auto& [name, shape] : shapes) {
    const auto& t = m.tensor(name);
    if (t.rows() != shape.first || t.cols() != shape.second) {
      throw FormatError("tensor '" + name + "' has shape " + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                        ", expected " + std::to_string(shape.first) + "x" + std::to_string(shape.second));
    }
    for (double v : t.data()) {
      if (!std::isfinite(v)) throw FormatError("tensor '" + name + "' has a non-finite entry");
    }
  }
  if (m.tensors.size() != shapes.size()) throw FormatError("model has unexpected extra tensors");
}

namespace detail {

// Larger attention and output gains keep the generated text from collapsing
// onto one repeated token.
inline double weight_gain(const std::string& leaf) {
  if (leaf == "w_q" || leaf == "w_k") return 2.0;
  if (leaf == "w_o" || leaf == "w_2") return 3.0;
  return 1.0;
}

}  // namespace detail

/// Seeded random toy model.
inline Model generate_random_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  Prng rng(seed);
  const auto shapes = tensor_shapes(config);
  for (const auto& [name, shape] : shapes) {
    double stddev = 0.0;
    double mean = 0.0;
    const auto leaf = name.substr(name.find('.') + 1);
    if (name == "wte") stddev = 1.0;
    else if (name == "wpe") stddev = 0.3;
    else if (leaf == "ln1_g" || leaf == "ln2_g" || name == "lnf_g") mean = 1.0, stddev = 0.1;
    else if (leaf.rfind("b_", 0) == 0 || leaf == "ln1_b" || leaf == "ln2_b" || name == "lnf_b") stddev = 0.05;
    else stddev = detail::weight_gain(leaf) / std::sqrt(static_cast<double>(shape.first));
    RealMatrix t(shape.first, shape.second);
    for (auto& v : t.data()) v = mean + stddev * rng.normal();
    if (name == "wte") {
      // Unit-RMS rows, so no single token dominates the tied unembedding.
      for (std::size_t i = 0; i < t.rows(); ++i) {
        double ss = 0.0;
        for (double v : t.row(i)) ss += v * v;
        const double rms = std::sqrt(ss / static_cast<double>(t.cols()));
        for (double& v : t.row(i)) v /= rms;
      }
    }
    m.tensors.emplace(name, std::move(t));
  }
  return m;
}

/// Writes model.json plus one float64 matrix file per tensor.
inline void save_model(const Model& m, const std::filesystem::path& dir) {
  validate_model(m);
  std::filesystem::create_directories(dir);
  nlohmann::json files = nlohmann::json::object();
  for (const auto& [name, t] : m.tensors) {
    const std::string file = name + ".bin";
    io::save_matrix((dir / file).string(), t);
    files[name] = file;
  }
  nlohmann::json manifest = {{"format", "cryptogen-model"}, {"version", 1}, {"config", m.config}, {"tensors", files}};
  std::ofstream out(dir / "model.json");
  if (!out) throw FormatError("cannot write " + (dir / "model.json").string());
  out << manifest.dump(2) << "\n";
}

/// Loads a model from a directory containing model.json, or from the
/// manifest path itself.
inline Model load_model(const std::filesystem::path& path) {
  const auto manifest_path = std::filesystem::is_directory(path) ? path / "model.json" : path;
  const auto dir = manifest_path.parent_path();
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot open model manifest " + manifest_path.string());
  Model m;
  try {
    nlohmann::json j;
    in >> j;
    if (j.value("format", std::string()) != "cryptogen-model") throw FormatError("not a model manifest");
    m.config = j.at("config").get<ModelConfig>();
    m.config.validate();
    for (const auto& [name, file] : j.at("tensors").items()) {
      m.tensors.emplace(name, io::load_real_matrix((dir / file.get<std::string>()).string()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model manifest " + manifest_path.string() + ": " + e.what());
  }
  validate_model(m);
  return m;
}

struct QuantizedLayer {
  std::vector<std::int64_t> ln1_g, ln1_b, ln2_g, ln2_b;
  std::vector<std::int64_t> b_q, b_k, b_v, b_o, b_1, b_2;
  Matrix w_q, w_k, w_v, w_o, w_1, w_2;
};

/// Weights rounded to fixed point: matrices as Z_p residues, vectors as
/// signed integers (public constants in the share domain).
struct QuantizedModel {
  ModelConfig config;
  FixedPointParams fp;
  Matrix wte, wpe, unembed;
  std::vector<std::int64_t> lnf_g, lnf_b;
  std::vector<QuantizedLayer> layers;

  std::size_t d2() const { return config.head_dim(); }
  Matrix head_columns(const Matrix& w, std::size_t h) const { return w.col_range(h * d2(), (h + 1) * d2()); }
  std::span<const std::int64_t> head_bias(const std::vector<std::int64_t>& b, std::size_t h) const {
    return std::span<const std::int64_t>(b).subspan(h * d2(), d2());
  }
};

inline QuantizedModel quantize(const Model& m, const FixedPointParams& fp) {
  validate_model(m);
  fp.validate();
  QuantizedModel q;
  q.config = m.config;
  q.fp = fp;
  auto mat = [&](const std::string& name) {
    const auto& t = m.tensor(name);
    Matrix out(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.data().size(); ++i) out.data()[i] = fp.encode(t.data()[i]);
    return out;
  };
  auto vec = [&](const std::string& name) {
    const auto& t = m.tensor(name);
    std::vector<std::int64_t> out(t.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = FixedPointParams::quantize(t.data()[i], fp.f);
    return out;
  };
  q.wte = mat("wte");
  q.wpe = mat("wpe");
  q.unembed = q.wte.transpose();
  q.lnf_g = vec("lnf_g");
  q.lnf_b = vec("lnf_b");
  for (std::size_t l = 0; l < m.config.layers; ++l) {
    QuantizedLayer ql;
    ql.ln1_g = vec(layer_tensor(l, "ln1_g"));
    ql.ln1_b = vec(layer_tensor(l, "ln1_b"));
    ql.ln2_g = vec(layer_tensor(l, "ln2_g"));
    ql.ln2_b = vec(layer_tensor(l, "ln2_b"));
    ql.b_q = vec(layer_tensor(l, "b_q"));
    ql.b_k = vec(layer_tensor(l, "b_k"));
    ql.b_v = vec(layer_tensor(l, "b_v"));
    ql.b_o = vec(layer_tensor(l, "b_o"));
    ql.b_1 = vec(layer_tensor(l, "b_1"));
    ql.b_2 = vec(layer_tensor(l, "b_2"));
    ql.w_q = mat(layer_tensor(l, "w_q"));
    ql.w_k = mat(layer_tensor(l, "w_k"));
    ql.w_v = mat(layer_tensor(l, "w_v"));
    ql.w_o = mat(layer_tensor(l, "w_o"));
    ql.w_1 = mat(layer_tensor(l, "w_1"));
    ql.w_2 = mat(layer_tensor(l, "w_2"));
    q.layers.push_back(std::move(ql));
  }
  return q;
}

/// Index of the largest logit; ties go to the lowest index.
inline int argmax(std::span<const std::int64_t> logits) {
  if (logits.empty()) throw DimensionError("argmax of empty logits");
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

inline void check_prompt(const ModelConfig& c, const std::vector<int>& prompt, std::size_t extra) {
  if (prompt.empty()) throw DimensionError("prompt must contain at least one token");
  if (prompt.size() + extra > c.max_seq) {
    throw DimensionError("prompt of " + std::to_string(prompt.size()) + " tokens plus " + std::to_string(extra) +
                         " generated exceeds max_seq " + std::to_string(c.max_seq));
  }
  for (int t : prompt) {
    if (t < 0 || static_cast<std::size_t>(t) >= c.vocab) throw DimensionError("token id " + std::to_string(t) + " out of range");
  }
}

// Share-domain glue shared by the encrypted pipeline and the oracle.
namespace stages {

/// Rescale after a product and add a public bias.
template <class D>
protocols::Value<D> affine(D& d, const protocols::Value<D>& x, std::span<const std::int64_t> bias,
                           const FixedPointParams& fp) {
  return d.add_const(protocols::rescale(d, x, fp), bias);
}

}  // namespace stages

/// Plaintext fixed-point state: per layer and head, the key and value rows
/// of every processed token.
struct OracleState {
  std::vector<std::vector<Matrix>> keys, values;
  std::vector<int> tokens;
  std::vector<std::int64_t> logits;
};

/// Plaintext fixed-point reference with the same quantization, the same
/// nonlinear protocols (evaluated in PlainDomain) and the same Z_p
/// arithmetic as the encrypted pipeline.
class Oracle {
 public:
  explicit Oracle(const QuantizedModel& qm, NonlinearConfig nl = {}) : qm_(qm), nl_(nl), d_(qm.fp.p) {}

  OracleState prefill(const std::vector<int>& prompt) const {
    check_prompt(qm_.config, prompt, 0);
    const auto& c = qm_.config;
    const Slot p = qm_.fp.p;
    const std::size_t m = prompt.size();
    OracleState st;
    st.tokens = prompt;
    st.keys.assign(c.layers, std::vector<Matrix>(c.heads));
    st.values.assign(c.layers, std::vector<Matrix>(c.heads));
    Matrix h(m, c.hidden);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c.hidden; ++j)
        h(i, j) = zp::add(qm_.wte(static_cast<std::size_t>(prompt[i]), j), qm_.wpe(i, j), p);

    for (std::size_t l = 0; l < c.layers; ++l) {
      const auto& L = qm_.layers[l];
      const Matrix x1 = rows_layernorm(h, L.ln1_g, L.ln1_b);
      Matrix attn(m, c.hidden);
      for (std::size_t hd = 0; hd < c.heads; ++hd) {
        const Matrix q = rows_affine(multiply_mod(x1, qm_.head_columns(L.w_q, hd), p), qm_.head_bias(L.b_q, hd));
        const Matrix k = rows_affine(multiply_mod(x1, qm_.head_columns(L.w_k, hd), p), qm_.head_bias(L.b_k, hd));
        const Matrix v = rows_affine(multiply_mod(x1, qm_.head_columns(L.w_v, hd), p), qm_.head_bias(L.b_v, hd));
        const Matrix o = plain_prefill_attention(q, k, v, qm_.fp, nl_);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < qm_.d2(); ++j) attn(i, hd * qm_.d2() + j) = o(i, j);
        st.keys[l][hd] = k;
        st.values[l][hd] = v;
      }
      h = add_mod(h, rows_affine(multiply_mod(attn, L.w_o, p), L.b_o));
      const Matrix x2 = rows_layernorm(h, L.ln2_g, L.ln2_b);
      Matrix f1 = rows_affine(multiply_mod(x2, L.w_1, p), L.b_1);
      for (std::size_t i = 0; i < m; ++i) {
        const auto g = protocols::gelu(d_, row_of(f1, i), qm_.fp);
        std::copy(g.begin(), g.end(), f1.row(i).begin());
      }
      h = add_mod(h, rows_affine(multiply_mod(f1, L.w_2, p), L.b_2));
    }
    st.logits = final_logits(row_of(h, m - 1));
    return st;
  }

  /// Feeds the last token of st.tokens at position st.tokens.size() - 1...
  /// Precisely: processes `token` at position = number of tokens already
  /// cached, appends it to st.tokens and refreshes st.logits.
  void decode(OracleState& st, int token) const {
    const auto& c = qm_.config;
    const Slot p = qm_.fp.p;
    const std::size_t pos = st.keys.at(0).at(0).rows();
    if (pos >= c.max_seq) throw DimensionError("sequence exceeds max_seq");
    std::vector<Slot> h(c.hidden);
    for (std::size_t j = 0; j < c.hidden; ++j)
      h[j] = zp::add(qm_.wte(static_cast<std::size_t>(token), j), qm_.wpe(pos, j), p);
    for (std::size_t l = 0; l < c.layers; ++l) {
      const auto& L = qm_.layers[l];
      const auto x1 = protocols::layernorm(d_, h, L.ln1_g, L.ln1_b, qm_.fp, nl_);
      std::vector<Slot> attn(c.hidden);
      for (std::size_t hd = 0; hd < c.heads; ++hd) {
        const auto q = stages::affine(d_, vecmat_mod(x1, qm_.head_columns(L.w_q, hd), p), qm_.head_bias(L.b_q, hd), qm_.fp);
        const auto k = stages::affine(d_, vecmat_mod(x1, qm_.head_columns(L.w_k, hd), p), qm_.head_bias(L.b_k, hd), qm_.fp);
        const auto v = stages::affine(d_, vecmat_mod(x1, qm_.head_columns(L.w_v, hd), p), qm_.head_bias(L.b_v, hd), qm_.fp);
        st.keys[l][hd] = append_row(st.keys[l][hd], k);
        st.values[l][hd] = append_row(st.values[l][hd], v);
        const auto o = plain_attention_row(q, st.keys[l][hd], st.values[l][hd], qm_.fp, nl_);
        std::copy(o.begin(), o.end(), attn.begin() + static_cast<std::ptrdiff_t>(hd * qm_.d2()));
      }
      h = d_.add(h, stages::affine(d_, vecmat_mod(attn, L.w_o, p), L.b_o, qm_.fp));
      const auto x2 = protocols::layernorm(d_, h, L.ln2_g, L.ln2_b, qm_.fp, nl_);
      const auto f1 = protocols::gelu(d_, stages::affine(d_, vecmat_mod(x2, L.w_1, p), L.b_1, qm_.fp), qm_.fp);
      h = d_.add(h, stages::affine(d_, vecmat_mod(f1, L.w_2, p), L.b_2, qm_.fp));
    }
    st.tokens.push_back(token);
    st.logits = final_logits(h);
  }

  /// Greedy generation of k tokens.
  std::vector<int> generate(const std::vector<int>& prompt, std::size_t k, std::vector<std::vector<std::int64_t>>* logits = nullptr) const {
    check_prompt(qm_.config, prompt, k);
    std::vector<int> out;
    if (k == 0) return out;
    OracleState st = prefill(prompt);
    for (std::size_t s = 0; s < k; ++s) {
      if (logits != nullptr) logits->push_back(st.logits);
      out.push_back(argmax(st.logits));
      if (s + 1 < k) decode(st, out.back());
    }
    return out;
  }

 private:
  static std::vector<Slot> row_of(const Matrix& m, std::size_t i) { return {m.row(i).begin(), m.row(i).end()}; }

  static Matrix append_row(const Matrix& m, const std::vector<Slot>& r) {
    Matrix out(m.rows() + 1, r.size());
    std::copy(m.data().begin(), m.data().end(), out.data().begin());
    std::copy(r.begin(), r.end(), out.row(m.rows()).begin());
    return out;
  }

  Matrix add_mod(const Matrix& a, const Matrix& b) const {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = zp::add(a.data()[i], b.data()[i], qm_.fp.p);
    return out;
  }

  Matrix rows_affine(const Matrix& x, std::span<const std::int64_t> bias) const {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto r = stages::affine(d_, row_of(x, i), bias, qm_.fp);
      std::copy(r.begin(), r.end(), out.row(i).begin());
    }
    return out;
  }

  Matrix rows_layernorm(const Matrix& x, const std::vector<std::int64_t>& g, const std::vector<std::int64_t>& b) const {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto r = protocols::layernorm(d_, row_of(x, i), g, b, qm_.fp, nl_);
      std::copy(r.begin(), r.end(), out.row(i).begin());
    }
    return out;
  }

  std::vector<std::int64_t> final_logits(const std::vector<Slot>& h) const {
    const auto x = protocols::layernorm(d_, h, qm_.lnf_g, qm_.lnf_b, qm_.fp, nl_);
    return d_.signed_values(vecmat_mod(x, qm_.unembed, qm_.fp.p));
  }

  const QuantizedModel& qm_;
  NonlinearConfig nl_;
  mutable PlainDomain d_;
};

/// Float64 forward pass over a whole sequence with exact GELU, softmax and
/// LayerNorm (epsilon 2^-f). Returns the logits of the last position.
inline std::vector<double> float_logits(const Model& model, const std::vector<int>& tokens) {
  const auto& c = model.config;
  const std::size_t m = tokens.size();
  const std::size_t d2 = c.head_dim();
  const double eps = std::ldexp(1.0, -c.frac_bits);
  auto vec = [&](const std::string& n) { return model.tensor(n).data(); };
  auto layernorm = [&](std::vector<double> x, const std::vector<double>& g, const std::vector<double>& b) {
    double mean = 0.0, var = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = g[j] * (x[j] - mean) / std::sqrt(var + eps) + b[j];
    return x;
  };
  auto matvec = [](const std::vector<double>& x, const RealMatrix& w, const std::vector<double>& b) {
    std::vector<double> y(w.cols(), 0.0);
    for (std::size_t k = 0; k < w.rows(); ++k)
      for (std::size_t j = 0; j < w.cols(); ++j) y[j] += x[k] * w(k, j);
    for (std::size_t j = 0; j < y.size() && !b.empty(); ++j) y[j] += b[j];
    return y;
  };
  std::vector<std::vector<double>> h(m, std::vector<double>(c.hidden));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c.hidden; ++j)
      h[i][j] = model.tensor("wte")(static_cast<std::size_t>(tokens[i]), j) + model.tensor("wpe")(i, j);
  for (std::size_t l = 0; l < c.layers; ++l) {
    auto t = [&](const char* n) { return layer_tensor(l, n); };
    std::vector<std::vector<double>> q(m), k(m), v(m), attn(m, std::vector<double>(c.hidden, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
      const auto x = layernorm(h[i], vec(t("ln1_g")), vec(t("ln1_b")));
      q[i] = matvec(x, model.tensor(t("w_q")), vec(t("b_q")));
      k[i] = matvec(x, model.tensor(t("w_k")), vec(t("b_k")));
      v[i] = matvec(x, model.tensor(t("w_v")), vec(t("b_v")));
    }
    for (std::size_t hd = 0; hd < c.heads; ++hd) {
      for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> s(i + 1);
        double mx = -1e300;
        for (std::size_t r = 0; r <= i; ++r) {
          double acc = 0.0;
          for (std::size_t j = 0; j < d2; ++j) acc += q[i][hd * d2 + j] * k[r][hd * d2 + j];
          s[r] = acc / std::sqrt(static_cast<double>(d2));
          mx = std::max(mx, s[r]);
        }
        double z = 0.0;
        for (auto& x : s) z += (x = std::exp(x - mx));
        for (std::size_t r = 0; r <= i; ++r)
          for (std::size_t j = 0; j < d2; ++j) attn[i][hd * d2 + j] += s[r] / z * v[r][hd * d2 + j];
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      const auto o = matvec(attn[i], model.tensor(t("w_o")), vec(t("b_o")));
      for (std::size_t j = 0; j < c.hidden; ++j) h[i][j] += o[j];
      auto f = matvec(layernorm(h[i], vec(t("ln2_g")), vec(t("ln2_b"))), model.tensor(t("w_1")), vec(t("b_1")));
      for (auto& x : f) x = gelu_reference(x);
      const auto o2 = matvec(f, model.tensor(t("w_2")), vec(t("b_2")));
      for (std::size_t j = 0; j < c.hidden; ++j) h[i][j] += o2[j];
    }
  }
  const auto x = layernorm(h[m - 1], vec("lnf_g"), vec("lnf_b"));
  return matvec(x, model.tensor("wte").transpose(), {});
}

}  // namespace cryptogen
