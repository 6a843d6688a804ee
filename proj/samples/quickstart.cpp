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

// Minimal end-to-end use of the library: build a toy model, run encrypted
// generation next to the plaintext oracle, and print per-step counters.

#include <iostream>

#include "cryptogen.hpp"

int main() {
  using namespace cryptogen;

  const Model model = generate_random_model(ModelConfig{}, /*seed=*/7);
  Context ctx(BackendParams::with_slots(64));
  const QuantizedModel qm = quantize(model, FixedPointParams(model.config.frac_bits, ctx.modulus()));

  const std::vector<int> prompt{3, 14, 15, 9, 26, 5, 35, 8};
  Engine engine(qm, ctx);
  const RunReport report = engine.generate(prompt, 12);
  const std::vector<int> expected = Oracle(qm).generate(prompt, 12);

  std::cout << "encrypted:";
  for (int t : report.tokens) std::cout << ' ' << t;
  std::cout << "\noracle:   ";
  for (int t : expected) std::cout << ' ' << t;
  std::cout << "\n" << (report.tokens == expected ? "match" : "MISMATCH") << "\n\n";

  std::cout << "step  mult_plain  mult_cipher  rotate  cache_cts\n";
  for (const auto& s : report.steps) {
    std::cout << s.step << "  " << s.ops.mult_plain << "  " << s.ops.mult_cipher << "  " << s.ops.rotate << "  "
              << s.cache_cts << "\n";
  }
  return report.tokens == expected ? 0 : 1;
}
