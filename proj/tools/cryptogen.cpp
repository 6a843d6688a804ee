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

// cryptogen command-line tool: model generation, encrypted generation,
// op-count benchmarks, cost tables and verification suites.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cryptogen.hpp"
#include "json.hpp"

namespace {

using namespace cryptogen;

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string params;
  std::string model;
  std::size_t prefill = 8;
  std::string prompt;
  std::size_t gen = 16;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string out;
};

BackendParams backend_params(const Common& c) {
  auto p = c.params.empty() ? BackendParams::with_slots(8192) : load_params(c.params);
  return p;
}

std::vector<int> parse_tokens(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ParamError("bad token id '" + item + "'");
    }
  }
  return out;
}

std::vector<int> prompt_for(const Common& c, const ModelConfig& cfg) {
  if (!c.prompt.empty()) return parse_tokens(c.prompt);
  return checks::random_prompt(c.prefill, cfg.vocab, c.seed);
}

/// Writes to --out when given, stdout otherwise.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
}

void require_model(const Common& c) {
  if (c.model.empty()) throw ParamError("--model is required");
}

int cmd_make_model(const Common& c, const ModelConfig& cfg) {
  if (c.out.empty()) throw ParamError("--out is required");
  save_model(generate_random_model(cfg, c.seed), c.out);
  std::cout << "wrote model to " << c.out << "\n";
  return kExitPass;
}

int cmd_generate(const Common& c) {
  require_model(c);
  const auto model = load_model(c.model);
  Context ctx(backend_params(c));
  const auto qm = checks::quantize_for(model, ctx);
  EngineOptions opt;
  opt.seed = c.seed;
  opt.threads = c.threads;
  Engine engine(qm, ctx, opt);
  const auto prompt = prompt_for(c, model.config);
  const auto report = engine.generate(prompt, c.gen);
  nlohmann::json j = report;
  j["n_slots"] = ctx.n_slots();
  emit(c.out, j.dump(2) + "\n");
  if (!c.out.empty()) std::cout << "tokens: " << checks::join(report.tokens, " ") << "\n";
  return kExitPass;
}

std::string csv_header() {
  return "run,prefill,step,mult_plain,mult_cipher,rotate,fresh_ct,mpc_bytes,refresh_events,cache_cts\n";
}

void csv_rows(std::ostringstream& os, const char* run, const RunReport& r) {
  for (const auto& s : r.steps) {
    os << run << "," << r.prompt.size() << "," << s.step << "," << s.ops.mult_plain << "," << s.ops.mult_cipher << ","
       << s.ops.rotate << "," << s.ops.encrypt << "," << s.ops.mpc_bytes << "," << s.ops.refresh_events << ","
       << s.cache_cts << "\n";
  }
}

int cmd_bench(const Common& c, const std::string& sweep) {
  require_model(c);
  const auto model = load_model(c.model);
  const auto params = backend_params(c);
  EngineOptions opt;
  opt.seed = c.seed;
  opt.threads = c.threads;
  std::ostringstream csv;
  csv << csv_header();
  auto cached = [&](std::size_t m, std::size_t k) {
    Context ctx(params);
    const auto qm = checks::quantize_for(model, ctx);
    Engine engine(qm, ctx, opt);
    return engine.generate(checks::random_prompt(m, model.config.vocab, c.seed), k);
  };

  if (sweep.empty()) {
    csv_rows(csv, "cached", cached(c.prefill, c.gen + 1));
  } else if (sweep == "m") {
    for (std::size_t m : {16, 32, 64}) {
      if (m > params.n_slots || m + c.gen + 1 > model.config.max_seq) continue;
      csv_rows(csv, "cached", cached(m, c.gen + 1));
    }
  } else if (sweep == "k") {
    const std::size_t kmax = checks::scaling_points().back();
    const auto run = cached(c.prefill, kmax + 1);
    csv_rows(csv, "cached", run);
    Context ctx(params);
    const auto qm = checks::quantize_for(model, ctx);
    const auto stateless = stateless_generate(qm, ctx, checks::random_prompt(1, model.config.vocab, c.seed), kmax, opt);
    csv_rows(csv, "stateless", stateless);
    std::vector<std::uint64_t> a, b;
    for (auto k : checks::scaling_points()) {
      a.push_back(run.cumulative_decode(k).mult_cipher);
      std::uint64_t acc = 0;
      for (std::size_t s = 0; s < k; ++s) acc += stateless.steps[s].ops.mult_cipher;
      b.push_back(acc);
    }
    std::cerr << "cumulative mult_cipher k={" << checks::join(checks::scaling_points()) << "}: cached {"
              << checks::join(a) << "} exponent " << checks::exponent_of(a) << "; stateless {" << checks::join(b)
              << "} exponent " << checks::exponent_of(b) << "\n";
  } else {
    throw ParamError("--sweep must be 'k' or 'm'");
  }
  emit(c.out, csv.str());
  return kExitPass;
}

CostDims parse_dims(const std::string& s) {
  const auto parts = parse_tokens(s);
  if (parts.size() != 5) throw ParamError("--dims expects m,d1,d2,n,k");
  for (int v : parts)
    if (v < 0) throw ParamError("--dims values must be non-negative");
  CostDims d{static_cast<std::uint64_t>(parts[0]), static_cast<std::uint64_t>(parts[1]),
             static_cast<std::uint64_t>(parts[2]), static_cast<std::uint64_t>(parts[3]),
             static_cast<std::uint64_t>(parts[4])};
  d.validate();
  return d;
}

int cmd_costs(const Common& c, const std::string& dims_s, const std::vector<std::string>& methods) {
  const CostDims dims = dims_s.empty() ? CostDims{} : parse_dims(dims_s);
  auto rows = cost_table(dims);
  if (!methods.empty()) {
    std::vector<CostRow> kept;
    for (const auto& name : methods) {
      const auto m = method_from_string(name);
      for (const auto& r : rows)
        if (r.method == m) kept.push_back(r);
    }
    rows = kept;
  }
  std::string md = cost_table_markdown(rows, dims);
  const auto reported = reported_only_cells(rows);
  if (!reported.empty()) {
    md += "\nReported-only cells\n\n";
    for (const auto& r : reported) md += "- " + r + "\n";
  }
  if (c.out.empty()) {
    std::cout << md;
  } else {
    std::filesystem::create_directories(c.out);
    emit((std::filesystem::path(c.out) / "costs.md").string(), md);
    emit((std::filesystem::path(c.out) / "costs.csv").string(), cost_table_csv(rows));
    std::cout << "wrote " << c.out << "/costs.md and costs.csv\n";
  }
  return kExitPass;
}

int cmd_verify(const Common& c, std::size_t seeds) {
  require_model(c);
  const auto model = load_model(c.model);
  const auto params = backend_params(c);
  const std::size_t d2 = model.config.head_dim();
  std::vector<std::size_t> lengths;
  for (std::size_t m : {8, 16, 32}) {
    if (m <= params.n_slots && m + 9 <= model.config.max_seq) lengths.push_back(m);
  }
  const std::size_t prompt = std::min<std::size_t>(8, params.n_slots);
  std::vector<checks::CheckResult> results;
  auto add = [&](const std::string& name, const std::function<checks::CheckResult()>& body) {
    results.push_back(checks::run_check(name, body));
    log::info(name, ": ", results.back().pass ? "pass" : "FAIL", " (", results.back().seconds, " s)");
  };
  add("oracle_equivalence", [&] { return checks::oracle_equivalence(model, params, seeds, prompt, 8, c.seed, c.threads); });
  add("kernel_equivalence", [&] { return checks::kernel_equivalence(50, c.seed); });
  add("prefix_independence", [&] { return checks::prefix_independence(model, params, lengths, 8, c.seed); });
  add("compaction_law", [&] { return checks::compaction_law(params.n_slots, d2, c.seed); });
  add("refresh", [&] { return checks::refresh_behaviour(model, params, 32, c.seed); });
  add("nonlinear_quality", [&] { return checks::nonlinear_quality(model.config.frac_bits, 200, c.seed); });

  bool ok = true;
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : results) {
    ok = ok && r.pass;
    // Timings stay out of the summary so reports are byte-stable.
    j.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
  }
  nlohmann::json summary = {{"ok", ok}, {"seed", c.seed}, {"n_slots", params.n_slots}, {"checks", j}};
  emit(c.out, summary.dump(2) + "\n");
  return ok ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cryptogen: secure autoregressive generation over an instrumented HE emulation"};
  app.require_subcommand(1);
  Common c;
  ModelConfig cfg;
  std::string sweep, dims;
  std::vector<std::string> methods;
  std::size_t seeds = 5;

  auto add_common = [&](CLI::App* sub, bool with_model) {
    sub->add_option("--seed", c.seed, "Seed for prompts and share masks")->capture_default_str();
    sub->add_option("--out", c.out, "Output path (stdout when omitted)");
    if (!with_model) return;
    sub->add_option("--params", c.params, "Backend parameter JSON (default: 8192 slots)")->check(CLI::ExistingFile);
    sub->add_option("--model", c.model, "Model directory or model.json");
    sub->add_option("--threads", c.threads, "Worker threads across heads")->check(CLI::Range(1, 256));
  };

  auto* make = app.add_subcommand("make-model", "Write a seeded random model");
  add_common(make, false);
  make->add_option("--layers", cfg.layers)->capture_default_str();
  make->add_option("--hidden", cfg.hidden)->capture_default_str();
  make->add_option("--heads", cfg.heads)->capture_default_str();
  make->add_option("--ffn", cfg.ffn)->capture_default_str();
  make->add_option("--vocab", cfg.vocab)->capture_default_str();
  make->add_option("--max-seq", cfg.max_seq)->capture_default_str();

  auto* gen = app.add_subcommand("generate", "Encrypted greedy generation; writes a JSON run report");
  add_common(gen, true);
  gen->add_option("--prefill", c.prefill, "Random prompt length")->capture_default_str();
  gen->add_option("--prompt", c.prompt, "Comma-separated prompt token ids (overrides --prefill)");
  gen->add_option("--gen", c.gen, "Tokens to generate")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Per-step operation counts as CSV");
  add_common(bench, true);
  bench->add_option("--prefill", c.prefill, "Prompt length")->capture_default_str();
  bench->add_option("--gen", c.gen, "Decode steps")->capture_default_str();
  bench->add_option("--sweep", sweep, "Sweep generation length (k) or prompt length (m)")
      ->check(CLI::IsMember({"k", "m"}));

  auto* costs = app.add_subcommand("costs", "Reproduce the linear-layer cost table");
  add_common(costs, false);
  costs->add_option("--dims", dims, "m,d1,d2,n,k (default 128,768,64,8192,5)");
  costs->add_option("--method", methods, "Restrict to these methods");

  auto* verify = app.add_subcommand("verify", "Oracle-equivalence and invariant suites");
  add_common(verify, true);
  verify->add_option("--seeds", seeds, "Prompt seeds for oracle equivalence")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    if (*make) return cmd_make_model(c, cfg);
    if (*gen) return cmd_generate(c);
    if (*bench) return cmd_bench(c, sweep);
    if (*costs) return cmd_costs(c, dims, methods);
    if (*verify) return cmd_verify(c, seeds);
  } catch (const ParamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: invalid input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
  return kExitUsage;
}
