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
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cryptogen/errors.hpp"
#include "cryptogen/modular.hpp"
#include "json.hpp"

namespace cryptogen {

/// Noise consumed per operation kind, in bits.
struct NoiseCosts {
  int mult_plain = 20;
  int mult_cipher = 40;
  int rotate = 2;
  int add = 0;
  int add_plain = 0;

  friend bool operator==(const NoiseCosts&, const NoiseCosts&) = default;
};

struct BackendParams {
  std::size_t n_slots = 8192;
  Slot plain_modulus = 0;
  int initial_noise_budget = 190;
  NoiseCosts noise_costs{};
  int refresh_threshold = 60;
  /// Only used for byte accounting of ciphertext transfers.
  int ciphertext_modulus_bits = 220;
  std::uint64_t seed = 0;

  /// Defaults for a slot count: p is the smallest prime >= 2^29 with
  /// p = 1 mod 2n.
  static BackendParams with_slots(std::size_t n_slots, std::uint64_t seed = 0) {
    BackendParams params;
    params.n_slots = n_slots;
    params.plain_modulus = zp::batching_prime(1ULL << 29U, n_slots);
    params.seed = seed;
    return params;
  }

  void validate() const {
    if (n_slots < 2 || !is_pow2(n_slots)) {
      throw ParamError("n_slots must be a power of two >= 2, got " + std::to_string(n_slots));
    }
    if (plain_modulus < 3 || plain_modulus >= (1ULL << 62U) || !zp::is_prime(plain_modulus)) {
      throw ParamError("plain modulus " + std::to_string(plain_modulus) + " is not a prime below 2^62");
    }
    if (plain_modulus % (2 * n_slots) != 1) {
      throw ParamError("plain modulus " + std::to_string(plain_modulus) + " is not 1 mod 2n (n=" +
                       std::to_string(n_slots) + ")");
    }
    const auto& c = noise_costs;
    if (c.mult_plain < 0 || c.mult_cipher < 0 || c.rotate < 0 || c.add < 0 || c.add_plain < 0) {
      throw ParamError("noise costs must be non-negative");
    }
    if (initial_noise_budget <= 0 || refresh_threshold >= initial_noise_budget) {
      throw ParamError("refresh_threshold must be below initial_noise_budget");
    }
    if (ciphertext_modulus_bits <= 0) throw ParamError("ciphertext_modulus_bits must be positive");
  }

  friend bool operator==(const BackendParams&, const BackendParams&) = default;
};

inline void to_json(nlohmann::json& j, const NoiseCosts& c) {
  j = {{"mult_plain", c.mult_plain}, {"mult_cipher", c.mult_cipher}, {"rotate", c.rotate},
       {"add", c.add}, {"add_plain", c.add_plain}};
}

inline void from_json(const nlohmann::json& j, NoiseCosts& c) {
  c.mult_plain = j.value("mult_plain", c.mult_plain);
  c.mult_cipher = j.value("mult_cipher", c.mult_cipher);
  c.rotate = j.value("rotate", c.rotate);
  c.add = j.value("add", c.add);
  c.add_plain = j.value("add_plain", c.add_plain);
}

inline void to_json(nlohmann::json& j, const BackendParams& p) {
  j = {{"n_slots", p.n_slots},
       {"plain_modulus", p.plain_modulus},
       {"initial_noise_budget", p.initial_noise_budget},
       {"noise_costs", p.noise_costs},
       {"refresh_threshold", p.refresh_threshold},
       {"ciphertext_modulus_bits", p.ciphertext_modulus_bits},
       {"seed", p.seed}};
}

/// Missing fields take the defaults for the given slot count; a missing
/// plain_modulus is derived from n_slots.
inline void from_json(const nlohmann::json& j, BackendParams& p) {
  try {
    const auto n = j.value("n_slots", std::size_t{8192});
    if (n < 2 || !is_pow2(n)) {
      throw ParamError("n_slots must be a power of two >= 2, got " + std::to_string(n));
    }
    p = BackendParams::with_slots(n);
    p.plain_modulus = j.value("plain_modulus", p.plain_modulus);
    p.initial_noise_budget = j.value("initial_noise_budget", p.initial_noise_budget);
    if (j.contains("noise_costs")) p.noise_costs = j.at("noise_costs").get<NoiseCosts>();
    p.refresh_threshold = j.value("refresh_threshold", p.refresh_threshold);
    p.ciphertext_modulus_bits = j.value("ciphertext_modulus_bits", p.ciphertext_modulus_bits);
    p.seed = j.value("seed", p.seed);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("backend params: ") + e.what());
  }
}

inline BackendParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open params file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("params file " + path + ": " + e.what());
  }
  auto params = j.get<BackendParams>();
  params.validate();
  return params;
}

/// Snapshot of operation tallies. Merging is field-wise addition.
struct OpCounter {
  std::uint64_t mult_plain = 0;
  std::uint64_t mult_cipher = 0;
  std::uint64_t rotate = 0;
  std::uint64_t add = 0;
  std::uint64_t add_plain = 0;
  std::uint64_t encrypt = 0;
  std::uint64_t decrypt = 0;
  std::uint64_t refresh_events = 0;
  std::uint64_t mpc_bytes = 0;

  OpCounter& operator+=(const OpCounter& o) {
    mult_plain += o.mult_plain;
    mult_cipher += o.mult_cipher;
    rotate += o.rotate;
    add += o.add;
    add_plain += o.add_plain;
    encrypt += o.encrypt;
    decrypt += o.decrypt;
    refresh_events += o.refresh_events;
    mpc_bytes += o.mpc_bytes;
    return *this;
  }

  friend OpCounter operator+(OpCounter a, const OpCounter& b) { return a += b; }

  /// Difference of two snapshots of the same monotone counter (later - earlier).
  friend OpCounter operator-(const OpCounter& a, const OpCounter& b) {
    OpCounter d;
    d.mult_plain = a.mult_plain - b.mult_plain;
    d.mult_cipher = a.mult_cipher - b.mult_cipher;
    d.rotate = a.rotate - b.rotate;
    d.add = a.add - b.add;
    d.add_plain = a.add_plain - b.add_plain;
    d.encrypt = a.encrypt - b.encrypt;
    d.decrypt = a.decrypt - b.decrypt;
    d.refresh_events = a.refresh_events - b.refresh_events;
    d.mpc_bytes = a.mpc_bytes - b.mpc_bytes;
    return d;
  }

  /// Equality over the homomorphic-operation fields only (no MPC bytes).
  bool same_he_ops(const OpCounter& o) const {
    return mult_plain == o.mult_plain && mult_cipher == o.mult_cipher && rotate == o.rotate &&
           add == o.add && add_plain == o.add_plain && encrypt == o.encrypt && decrypt == o.decrypt;
  }

  friend bool operator==(const OpCounter&, const OpCounter&) = default;
};

inline void to_json(nlohmann::json& j, const OpCounter& c) {
  j = {{"mult_plain", c.mult_plain}, {"mult_cipher", c.mult_cipher}, {"rotate", c.rotate},
       {"add", c.add}, {"add_plain", c.add_plain}, {"encrypt", c.encrypt},
       {"decrypt", c.decrypt}, {"refresh_events", c.refresh_events}, {"mpc_bytes", c.mpc_bytes}};
}

inline void from_json(const nlohmann::json& j, OpCounter& c) {
  c.mult_plain = j.at("mult_plain").get<std::uint64_t>();
  c.mult_cipher = j.at("mult_cipher").get<std::uint64_t>();
  c.rotate = j.at("rotate").get<std::uint64_t>();
  c.add = j.at("add").get<std::uint64_t>();
  c.add_plain = j.at("add_plain").get<std::uint64_t>();
  c.encrypt = j.at("encrypt").get<std::uint64_t>();
  c.decrypt = j.at("decrypt").get<std::uint64_t>();
  c.refresh_events = j.at("refresh_events").get<std::uint64_t>();
  c.mpc_bytes = j.at("mpc_bytes").get<std::uint64_t>();
}

/// Plaintext operand: n_slots elements of Z_p.
class PlainVector {
 public:
  PlainVector() = default;
  explicit PlainVector(std::vector<Slot> slots) : slots_(std::move(slots)) {}

  std::size_t size() const { return slots_.size(); }
  Slot operator[](std::size_t i) const { return slots_[i]; }
  std::span<const Slot> slots() const { return slots_; }
  const std::vector<Slot>& values() const { return slots_; }

  friend bool operator==(const PlainVector&, const PlainVector&) = default;

 private:
  std::vector<Slot> slots_;
};

class Context;

/// Emulated SIMD ciphertext. Immutable: every operation yields a new value,
/// and copies share the slot payload.
class SlotCiphertext {
 public:
  SlotCiphertext() = default;

  std::size_t size() const { return slots_ ? slots_->size() : 0; }
  int noise_budget() const { return budget_; }
  std::uint64_t id() const { return id_; }
  std::uint64_t context_id() const { return context_; }
  bool valid() const { return static_cast<bool>(slots_); }

  /// Serialized ciphertext body. In the emulation this is the slot array;
  /// reading it is not a decryption and is not counted.
  std::span<const Slot> payload() const { return *slots_; }

 private:
  friend class Context;
  SlotCiphertext(std::shared_ptr<const std::vector<Slot>> slots, int budget, std::uint64_t id,
                 std::uint64_t context)
      : slots_(std::move(slots)), budget_(budget), id_(id), context_(context) {}

  std::shared_ptr<const std::vector<Slot>> slots_;
  int budget_ = 0;
  std::uint64_t id_ = 0;
  std::uint64_t context_ = 0;
};

/// Instrumented emulation backend. Arithmetic is exact in Z_p; noise is a
/// linear ledger; every operation is tallied. Counter updates are atomic so
/// kernels may run on several threads against one context.
class Context {
 public:
  explicit Context(BackendParams params) : params_(std::move(params)) {
    params_.validate();
    context_id_ = next_context_id();
  }

  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;

  const BackendParams& params() const { return params_; }
  std::size_t n_slots() const { return params_.n_slots; }
  Slot modulus() const { return params_.plain_modulus; }

  /// Size of one ciphertext on the wire: two ring elements of n
  /// coefficients modulo q.
  std::uint64_t ciphertext_bytes() const {
    return 2ULL * params_.n_slots * static_cast<std::uint64_t>(params_.ciphertext_modulus_bits) / 8;
  }

  PlainVector plain(std::vector<Slot> values) const {
    if (values.size() > n_slots()) {
      throw DimensionError("plain vector of length " + std::to_string(values.size()) + " exceeds " +
                           std::to_string(n_slots()) + " slots");
    }
    for (auto& v : values) v %= modulus();
    values.resize(n_slots(), 0);
    return PlainVector(std::move(values));
  }

  PlainVector zeros() const { return PlainVector(std::vector<Slot>(n_slots(), 0)); }
  PlainVector ones() const { return PlainVector(std::vector<Slot>(n_slots(), 1)); }

  SlotCiphertext encrypt(const PlainVector& v) {
    check_length(v.size());
    counts_.encrypt.fetch_add(1, std::memory_order_relaxed);
    return make(std::vector<Slot>(v.slots().begin(), v.slots().end()), params_.initial_noise_budget);
  }

  PlainVector decrypt(const SlotCiphertext& a) {
    check_same(a);
    if (a.noise_budget() <= 0) {
      throw DecryptionFailure("ciphertext " + std::to_string(a.id()) + " has no noise budget left");
    }
    counts_.decrypt.fetch_add(1, std::memory_order_relaxed);
    return PlainVector(*a.slots_);
  }

  SlotCiphertext add(const SlotCiphertext& a, const SlotCiphertext& b) {
    check_same(a);
    check_same(b);
    const int budget = spend(std::min(a.noise_budget(), b.noise_budget()), params_.noise_costs.add, "add");
    counts_.add.fetch_add(1, std::memory_order_relaxed);
    return make(zip(*a.slots_, *b.slots_, [p = modulus()](Slot x, Slot y) { return zp::add(x, y, p); }),
                budget);
  }

  SlotCiphertext add_plain(const SlotCiphertext& a, const PlainVector& m) {
    check_same(a);
    check_length(m.size());
    const int budget = spend(a.noise_budget(), params_.noise_costs.add_plain, "add_plain");
    counts_.add_plain.fetch_add(1, std::memory_order_relaxed);
    return make(zip(*a.slots_, m.values(), [p = modulus()](Slot x, Slot y) { return zp::add(x, y, p); }),
                budget);
  }

  SlotCiphertext mult_plain(const SlotCiphertext& a, const PlainVector& m) {
    check_same(a);
    check_length(m.size());
    const int budget = spend(a.noise_budget(), params_.noise_costs.mult_plain, "mult_plain");
    counts_.mult_plain.fetch_add(1, std::memory_order_relaxed);
    return make(zip(*a.slots_, m.values(), [p = modulus()](Slot x, Slot y) { return zp::mul(x, y, p); }),
                budget);
  }

  SlotCiphertext mult_cipher(const SlotCiphertext& a, const SlotCiphertext& b) {
    check_same(a);
    check_same(b);
    const int budget =
        spend(std::min(a.noise_budget(), b.noise_budget()), params_.noise_costs.mult_cipher, "mult_cipher");
    counts_.mult_cipher.fetch_add(1, std::memory_order_relaxed);
    return make(zip(*a.slots_, *b.slots_, [p = modulus()](Slot x, Slot y) { return zp::mul(x, y, p); }),
                budget);
  }

  /// Cyclic left shift: out[i] = in[(i + k) mod n]. Negative k shifts right.
  SlotCiphertext rotate(const SlotCiphertext& a, std::int64_t k) {
    check_same(a);
    const int budget = spend(a.noise_budget(), params_.noise_costs.rotate, "rotate");
    counts_.rotate.fetch_add(1, std::memory_order_relaxed);
    const auto n = static_cast<std::int64_t>(n_slots());
    const auto shift = static_cast<std::size_t>(((k % n) + n) % n);
    std::vector<Slot> out(a.slots_->size());
    std::rotate_copy(a.slots_->begin(), a.slots_->begin() + static_cast<std::ptrdiff_t>(shift),
                     a.slots_->end(), out.begin());
    return make(std::move(out), budget);
  }

  /// Rebuilds a ciphertext from its serialized body (snapshot resume).
  SlotCiphertext import_ciphertext(std::vector<Slot> payload, int noise_budget) {
    check_length(payload.size());
    for (auto& v : payload) v %= modulus();
    if (noise_budget < 0) throw FormatError("negative noise budget in imported ciphertext");
    return make(std::move(payload), noise_budget);
  }

  OpCounter counters() const {
    OpCounter c;
    c.mult_plain = counts_.mult_plain.load(std::memory_order_relaxed);
    c.mult_cipher = counts_.mult_cipher.load(std::memory_order_relaxed);
    c.rotate = counts_.rotate.load(std::memory_order_relaxed);
    c.add = counts_.add.load(std::memory_order_relaxed);
    c.add_plain = counts_.add_plain.load(std::memory_order_relaxed);
    c.encrypt = counts_.encrypt.load(std::memory_order_relaxed);
    c.decrypt = counts_.decrypt.load(std::memory_order_relaxed);
    c.refresh_events = counts_.refresh_events.load(std::memory_order_relaxed);
    c.mpc_bytes = counts_.mpc_bytes.load(std::memory_order_relaxed);
    return c;
  }

  void record_refresh() { counts_.refresh_events.fetch_add(1, std::memory_order_relaxed); }
  void record_mpc_bytes(std::uint64_t bytes) { counts_.mpc_bytes.fetch_add(bytes, std::memory_order_relaxed); }

 private:
  struct AtomicCounts {
    std::atomic<std::uint64_t> mult_plain{0};
    std::atomic<std::uint64_t> mult_cipher{0};
    std::atomic<std::uint64_t> rotate{0};
    std::atomic<std::uint64_t> add{0};
    std::atomic<std::uint64_t> add_plain{0};
    std::atomic<std::uint64_t> encrypt{0};
    std::atomic<std::uint64_t> decrypt{0};
    std::atomic<std::uint64_t> refresh_events{0};
    std::atomic<std::uint64_t> mpc_bytes{0};
  };

  static std::uint64_t next_context_id() {
    static std::atomic<std::uint64_t> next{1};
    return next.fetch_add(1, std::memory_order_relaxed);
  }

  template <class Op>
  static std::vector<Slot> zip(const std::vector<Slot>& a, const std::vector<Slot>& b, Op op) {
    std::vector<Slot> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
    return out;
  }

  static int spend(int budget, int cost, const char* op) {
    const int left = budget - cost;
    if (left < 0) {
      throw BudgetExhausted(std::string(op) + " needs " + std::to_string(cost) + " bits, only " +
                            std::to_string(budget) + " left");
    }
    return left;
  }

  void check_length(std::size_t len) const {
    if (len != n_slots()) {
      throw DimensionError("vector of length " + std::to_string(len) + " does not match " +
                           std::to_string(n_slots()) + " slots");
    }
  }

  void check_same(const SlotCiphertext& a) const {
    if (!a.valid()) throw Error("use of an empty ciphertext");
    if (a.context_id() != context_id_) throw Error("ciphertext belongs to a different context");
  }

  SlotCiphertext make(std::vector<Slot> slots, int budget) {
    return SlotCiphertext(std::make_shared<const std::vector<Slot>>(std::move(slots)), budget,
                          ids_.fetch_add(1, std::memory_order_relaxed), context_id_);
  }

  BackendParams params_;
  std::uint64_t context_id_ = 0;
  std::atomic<std::uint64_t> ids_{1};
  AtomicCounts counts_;
};

}  // namespace cryptogen
