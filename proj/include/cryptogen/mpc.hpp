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
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cryptogen/backend.hpp"
#include "cryptogen/errors.hpp"
#include "cryptogen/fixed_point.hpp"
#include "cryptogen/modular.hpp"
#include "json.hpp"

namespace cryptogen {

/// Additive two-party sharing over Z_p: secret = client + server (mod p).
struct SharePair {
  std::vector<Slot> client;
  std::vector<Slot> server;

  std::size_t size() const { return client.size(); }

  std::vector<Slot> reconstruct(Slot p) const {
    std::vector<Slot> out(client.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = zp::add(client[i], server[i], p);
    return out;
  }
};

/// Per-element message sizes of the emulated two-party functionalities, in
/// units of one ring element. Only shapes enter the accounting.
struct ChannelCostModel {
  std::uint64_t mul = 4;         // Beaver multiplication: two openings per party
  std::uint64_t trunc = 2;       // one masked opening per party
  std::uint64_t compare = 0;     // 0 means ceil(log2 p) elements (bitwise comparison)
  std::uint64_t bit_per_output = 2;
  std::uint64_t normalize = 0;   // 0 means 2 * ceil(log2 p)
  std::uint64_t shift = 0;       // 0 means ceil(log2 p)
};

/// One aggregated line of the channel transcript.
struct ChannelEntry {
  std::uint64_t calls = 0;
  std::uint64_t elements = 0;
  std::uint64_t bytes = 0;
  std::uint64_t rounds = 0;
};

/// Byte- and round-counting channel between the client and server roles.
/// Both roles run in this process. Supplies fresh share masks from a seeded
/// generator. When a context is attached, bytes are also added to its
/// counters. A channel is a serial conversation; use one per thread.
class MpcChannel {
 public:
  MpcChannel(Slot p, std::uint64_t seed, Context* sink = nullptr) : p_(p), rng_(seed), sink_(sink) {
    element_bits_ = zp::bit_length(p) + (std::has_single_bit(p) ? 1U : 0U);
    element_bytes_ = (element_bits_ + 7) / 8;
  }

  Slot modulus() const { return p_; }
  std::uint64_t bytes_sent() const { return bytes_; }
  std::uint64_t rounds() const { return rounds_; }
  unsigned element_bits() const { return element_bits_; }
  std::uint64_t element_bytes() const { return element_bytes_; }
  const ChannelCostModel& cost_model() const { return costs_; }
  void set_cost_model(const ChannelCostModel& c) { costs_ = c; }
  Prng& rng() { return rng_; }

  std::vector<Slot> mask(std::size_t len) { return rng_.uniform_vector(len, p_); }

  /// Charges one protocol invocation.
  void charge(const std::string& op, std::uint64_t elements, std::uint64_t bytes, std::uint64_t rounds) {
    auto& e = transcript_[op];
    e.calls += 1;
    e.elements += elements;
    e.bytes += bytes;
    e.rounds += rounds;
    bytes_ += bytes;
    rounds_ += rounds;
    if (sink_ != nullptr) sink_->record_mpc_bytes(bytes);
  }

  /// Charges `units` ring elements per input element.
  void charge_elements(const std::string& op, std::uint64_t elements, std::uint64_t units, std::uint64_t rounds) {
    charge(op, elements, elements * units * element_bytes_, rounds);
  }

  std::uint64_t compare_units() const { return costs_.compare != 0 ? costs_.compare : element_bits_; }
  std::uint64_t normalize_units() const { return costs_.normalize != 0 ? costs_.normalize : 2ULL * element_bits_; }
  std::uint64_t shift_units() const { return costs_.shift != 0 ? costs_.shift : element_bits_; }
  std::uint64_t log_rounds() const { return ceil_log2(element_bits_); }

  const std::map<std::string, ChannelEntry>& transcript() const { return transcript_; }

  nlohmann::json transcript_json() const {
    nlohmann::json ops = nlohmann::json::object();
    for (const auto& [name, e] : transcript_) {
      ops[name] = {{"calls", e.calls}, {"elements", e.elements}, {"bytes", e.bytes}, {"rounds", e.rounds}};
    }
    return {{"bytes_sent", bytes_}, {"rounds", rounds_}, {"element_bytes", element_bytes_}, {"ops", ops}};
  }

 private:
  Slot p_;
  Prng rng_;
  Context* sink_;
  unsigned element_bits_ = 0;
  std::uint64_t element_bytes_ = 0;
  ChannelCostModel costs_{};
  std::uint64_t bytes_ = 0;
  std::uint64_t rounds_ = 0;
  std::map<std::string, ChannelEntry> transcript_;
};

/// Secret-shared counterpart of PlainDomain. Local operations act on the
/// shares directly. Interactive operations are emulated ideal
/// functionalities: the channel reconstructs, evaluates the plain function,
/// and reshares the result under a fresh mask, charging bytes and rounds
/// from the operand shapes only.
class ShareDomain {
 public:
  using value_type = SharePair;

  explicit ShareDomain(MpcChannel& ch) : ch_(ch), plain_(ch.modulus()) {}

  Slot modulus() const { return plain_.modulus(); }
  MpcChannel& channel() { return ch_; }

  SharePair share(const std::vector<Slot>& secret) {
    SharePair s;
    s.server = ch_.mask(secret.size());
    s.client = plain_.sub(secret, s.server);
    return s;
  }

  std::vector<Slot> reveal(const SharePair& s) const { return s.reconstruct(modulus()); }

  static std::size_t size(const SharePair& v) { return v.size(); }
  static SharePair slice(const SharePair& v, std::size_t begin, std::size_t end) {
    return {PlainDomain::slice(v.client, begin, end), PlainDomain::slice(v.server, begin, end)};
  }
  static SharePair concat(SharePair a, const SharePair& b) {
    return {PlainDomain::concat(std::move(a.client), b.client), PlainDomain::concat(std::move(a.server), b.server)};
  }
  static SharePair broadcast(const SharePair& v, std::size_t len) {
    return {PlainDomain::broadcast(v.client, len), PlainDomain::broadcast(v.server, len)};
  }

  /// Public constant: held entirely by the client share.
  SharePair constant(std::size_t len, std::int64_t c) const {
    return {plain_.constant(len, c), std::vector<Slot>(len, 0)};
  }

  SharePair sum(const SharePair& v) const { return {plain_.sum(v.client), plain_.sum(v.server)}; }
  SharePair add(const SharePair& a, const SharePair& b) const {
    return {plain_.add(a.client, b.client), plain_.add(a.server, b.server)};
  }
  SharePair sub(const SharePair& a, const SharePair& b) const {
    return {plain_.sub(a.client, b.client), plain_.sub(a.server, b.server)};
  }
  SharePair neg(const SharePair& a) const { return {plain_.neg(a.client), plain_.neg(a.server)}; }
  SharePair add_const(const SharePair& a, std::int64_t c) const { return {plain_.add_const(a.client, c), a.server}; }
  SharePair add_const(const SharePair& a, std::span<const std::int64_t> c) const {
    return {plain_.add_const(a.client, c), a.server};
  }
  SharePair mul_const(const SharePair& a, std::int64_t c) const {
    return {plain_.mul_const(a.client, c), plain_.mul_const(a.server, c)};
  }
  SharePair mul_const(const SharePair& a, std::span<const std::int64_t> c) const {
    return {plain_.mul_const(a.client, c), plain_.mul_const(a.server, c)};
  }

  SharePair mul(const SharePair& a, const SharePair& b) {
    ch_.charge_elements("mul", a.size(), ch_.cost_model().mul, 1);
    return share(plain_.mul(reveal(a), reveal(b)));
  }

  SharePair trunc(const SharePair& a, int bits) {
    ch_.charge_elements("trunc", a.size(), ch_.cost_model().trunc, 1);
    return share(plain_.trunc(reveal(a), bits));
  }

  SharePair ltz(const SharePair& a) {
    ch_.charge_elements("compare", a.size(), ch_.compare_units(), ch_.log_rounds());
    return share(plain_.ltz(reveal(a)));
  }

  std::vector<SharePair> bit_decompose(const SharePair& a, int nbits) {
    ch_.charge_elements("bit_decompose", a.size(),
                        ch_.compare_units() + ch_.cost_model().bit_per_output * static_cast<std::uint64_t>(nbits),
                        ch_.log_rounds());
    std::vector<SharePair> out;
    for (auto& bits : plain_.bit_decompose(reveal(a), nbits)) out.push_back(share(bits));
    return out;
  }

  std::pair<SharePair, SharePair> normalize(const SharePair& a, int frac, int step, int offset) {
    ch_.charge_elements("normalize", a.size(), ch_.normalize_units(), ch_.log_rounds() + 1);
    auto [m, e] = plain_.normalize(reveal(a), frac, step, offset);
    auto ms = share(m);
    return {std::move(ms), share(e)};
  }

  SharePair shift(const SharePair& a, const SharePair& amount, bool round) {
    ch_.charge_elements("shift", a.size(), ch_.shift_units(), ch_.log_rounds());
    return share(plain_.shift(reveal(a), reveal(amount), round));
  }

 private:
  MpcChannel& ch_;
  PlainDomain plain_;
};

/// Server masks the ciphertext with fresh r and sends it; the client
/// decrypts. Shares cover slots [0, len) (the whole vector by default).
inline SharePair he_to_shares(const SlotCiphertext& ct, Context& ctx, MpcChannel& ch, std::size_t len = 0) {
  if (len == 0) len = ctx.n_slots();
  if (len > ctx.n_slots()) throw DimensionError("share length exceeds slot count");
  std::vector<Slot> r = ch.mask(ctx.n_slots());
  std::vector<Slot> neg_r(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) neg_r[i] = zp::neg(r[i], ctx.modulus());
  const auto masked = ctx.add_plain(ct, PlainVector(std::move(neg_r)));
  ch.charge("he_to_shares", len, ctx.ciphertext_bytes(), 1);
  const auto opened = ctx.decrypt(masked);
  SharePair s;
  s.client.assign(opened.slots().begin(), opened.slots().begin() + static_cast<std::ptrdiff_t>(len));
  r.resize(len);
  s.server = std::move(r);
  return s;
}

/// Client encrypts its share into slots [0, len) and sends it; the server
/// adds its own share homomorphically. The result carries a fresh budget.
inline SlotCiphertext shares_to_he(const SharePair& s, Context& ctx, MpcChannel& ch) {
  if (s.size() > ctx.n_slots()) throw DimensionError("share length exceeds slot count");
  const auto ct = ctx.encrypt(ctx.plain(s.client));
  ch.charge("shares_to_he", s.size(), ctx.ciphertext_bytes(), 1);
  return ctx.add_plain(ct, ctx.plain(s.server));
}

}  // namespace cryptogen
