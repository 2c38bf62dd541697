// Copyright 2026 The evict-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// evict-sim: profile, run, compare and sweep verification policies on the
// synthetic MoE target.
//
// Exit codes: 0 success, 2 config error, 3 invariant or oracle failure,
// 4 I/O error.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "evict/cost_model.hpp"
#include "evict/errors.hpp"
#include "evict/harness.hpp"
#include "evict/oracle_suite.hpp"
#include "evict/policy.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> policies;
  std::string out_csv;
  std::string out_json;
  std::string cost_table;
  std::vector<std::size_t> k_grid{1, 2, 4, 8, 16, 32};
};

evict::RunConfig load_config(const Options& opt) {
  evict::RunConfig cfg = opt.config_path.empty()
                             ? evict::RunConfig{}
                             : evict::load_run_config(opt.config_path);
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.cost_table.empty()) cfg.cost_table = opt.cost_table;
  if (!opt.out_csv.empty()) cfg.out_csv = opt.out_csv;
  if (!opt.out_json.empty()) cfg.out_json = opt.out_json;
  cfg.validate();
  return cfg;
}

void print_summary(const evict::Report& report) {
  std::printf("%-16s %8s %8s %9s %9s %9s %8s\n", "policy", "MAT", "verified",
              "union", "latency", "TPOT", "speedup");
  for (const auto& p : report.policies) {
    const auto& a = p.overall;
    std::printf("%-16s %8.3f %8.2f %9.2f %9.3f %9.4f %7.3fx\n", p.policy.c_str(),
                a.mat, a.mean_verified_tokens, a.mean_union_size, a.mean_latency,
                a.tpot, a.speedup);
  }
}

void emit_report(const evict::RunConfig& cfg, const evict::Report& report,
                 bool per_policy_csv) {
  if (!cfg.out_csv.empty()) {
    for (const auto& p : report.policies) {
      const std::string path = per_policy_csv
                                   ? evict::policy_output_path(cfg.out_csv, p.policy)
                                   : cfg.out_csv;
      evict::write_text_file(path, evict::rows_to_csv(p.rows));
    }
  }
  if (!cfg.out_json.empty()) {
    evict::write_text_file(cfg.out_json, evict::to_json(report).dump(2) + "\n");
  }
  print_summary(report);
}

int cmd_profile(const Options& opt) {
  auto cfg = load_config(opt);
  const std::string out = !opt.cost_table.empty() ? opt.cost_table : cfg.out_json;
  cfg.cost_table.clear();
  const evict::Harness harness(cfg);
  const std::string text = evict::to_json(harness.cost_table()).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    evict::write_text_file(out, text);
  }
  return kExitOk;
}

int cmd_run(const Options& opt) {
  auto cfg = load_config(opt);
  if (opt.policies.size() > 1) {
    throw evict::ConfigError("run takes a single --policy; use compare");
  }
  if (!opt.policies.empty()) cfg.policy = opt.policies.front();
  const evict::Harness harness(cfg);
  const std::vector<evict::PolicySpec> specs{evict::PolicySpec::parse(cfg.policy)};
  emit_report(cfg, harness.run_benchmark(specs), false);
  return kExitOk;
}

int cmd_compare(const Options& opt) {
  const auto cfg = load_config(opt);
  std::vector<evict::PolicySpec> specs;
  if (opt.policies.empty()) {
    for (const std::string& name :
         {std::string("autoregressive"),
          "fixed:" + std::to_string(cfg.tree.draft_tokens), std::string("evict")}) {
      specs.push_back(evict::PolicySpec::parse(name));
    }
  } else {
    for (const auto& name : opt.policies) specs.push_back(evict::PolicySpec::parse(name));
  }
  const evict::Harness harness(cfg);
  emit_report(cfg, harness.run_benchmark(specs), true);
  return kExitOk;
}

int cmd_sweep(const Options& opt) {
  const auto cfg = load_config(opt);
  const evict::Harness harness(cfg);
  const auto rows = harness.sweep_tree_size(opt.k_grid);
  const std::string csv = evict::sweep_to_csv(rows);
  if (!cfg.out_csv.empty()) evict::write_text_file(cfg.out_csv, csv);
  std::cout << csv;
  return kExitOk;
}

int cmd_oracle(const Options& opt) {
  const std::uint64_t seed = opt.seed.value_or(1);
  bool ok = true;
  for (const auto& check : evict::run_oracle_suite(seed)) {
    std::printf("[%s] %s: %s\n", check.passed ? "PASS" : "FAIL",
                check.name.c_str(), check.detail.c_str());
    ok = ok && check.passed;
  }
  return ok ? kExitOk : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expert-aware adaptive verification simulator"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Run config JSON")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Override the run seed");
    sub->add_option("--out-csv", opt.out_csv, "Per-iteration CSV output");
    sub->add_option("--out-json", opt.out_json, "Summary JSON output");
    sub->add_option("--cost-table", opt.cost_table, "Cost table JSON path");
  };

  auto* profile = app.add_subcommand("profile", "Profile C(k) and emit the cost table");
  add_common(profile);
  auto* run = app.add_subcommand("run", "Decode all prompts under one policy");
  add_common(run);
  run->add_option("--policy", opt.policies,
                  "evict | fixed:<k> | coverage:<rho> | depthconf:<t> | autoregressive");
  auto* compare = app.add_subcommand("compare", "Paired multi-policy report");
  add_common(compare);
  compare->add_option("--policy", opt.policies, "Policy to include (repeatable)");
  auto* sweep = app.add_subcommand("sweep", "Union size and latency versus fixed k");
  add_common(sweep);
  sweep->add_option("--k-grid", opt.k_grid, "Budgets to sweep")->delimiter(',');
  auto* oracle = app.add_subcommand("oracle", "Run the estimator and verifier oracles");
  oracle->add_option("--seed", opt.seed, "Seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const auto start = std::chrono::steady_clock::now();
  int code = kExitOk;
  try {
    if (*profile) code = cmd_profile(opt);
    if (*run) code = cmd_run(opt);
    if (*compare) code = cmd_compare(opt);
    if (*sweep) code = cmd_sweep(opt);
    if (*oracle) code = cmd_oracle(opt);
  } catch (const evict::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const evict::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const evict::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const evict::InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInvariant;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::fprintf(stderr, "wall time: %.2f s\n", secs);
  return code;
}
