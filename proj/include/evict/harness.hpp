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

#pragma once

// End-to-end decode loop, paired benchmark runs and report emission.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "evict/cost_model.hpp"
#include "evict/distribution.hpp"
#include "evict/draft_tree.hpp"
#include "evict/drafter.hpp"
#include "evict/errors.hpp"
#include "evict/estimator.hpp"
#include "evict/moe_target.hpp"
#include "evict/policy.hpp"
#include "evict/verifier.hpp"

namespace evict {

struct DrafterConfig {
  // Calibration per prompt, assigned round-robin: prompt i gets
  // alphas[i % alphas.size()].
  std::vector<double> alphas{0.3, 0.6, 0.95};
  double noise_scale = 1.0;
  std::uint64_t noise_seed = 7;
};

struct PromptConfig {
  std::size_t count = 12;
  std::size_t length = 16;
  std::uint64_t seed = 11;
};

struct RunConfig {
  MoEConfig model;
  DrafterConfig drafter;
  TreeParams tree;
  double temperature = 1.0;
  std::string policy = "evict";
  CostParams cost = CostParams::expert_dominated();
  std::string cost_table;  // optional path; profiled at startup when empty
  std::size_t profile_iters = 200;
  PromptConfig prompts;
  std::size_t max_new_tokens = 64;
  std::uint64_t seed = 0;
  std::string out_csv;
  std::string out_json;

  void validate() const {
    model.validate();
    tree.validate();
    cost.validate();
    if (tree.topk > model.vocab_size) {
      throw ConfigError("tree.topk exceeds model.vocab_size");
    }
    if (drafter.alphas.empty()) throw ConfigError("drafter.alphas is empty");
    for (double a : drafter.alphas) {
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("drafter alpha outside [0, 1]");
    }
    if (!std::isfinite(drafter.noise_scale) || drafter.noise_scale < 0.0) {
      throw ConfigError("drafter.noise_scale must be >= 0");
    }
    if (!std::isfinite(temperature) || temperature < 0.0) {
      throw ConfigError("temperature must be >= 0");
    }
    if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
    if (profile_iters < 1) throw ConfigError("profile_iters must be >= 1");
    if (prompts.count < 1 || prompts.length < 1) {
      throw ConfigError("prompts.count and prompts.length must be >= 1");
    }
    PolicySpec::parse(policy);
  }
};

namespace detail {

inline void require_keys(const nlohmann::json& j, std::string_view where,
                         std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) {
    throw ConfigError(std::string(where) + ": expected a JSON object");
  }
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || item.key() == a;
    if (!known) {
      throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
    }
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Parses a run config. Every object rejects unknown keys; absent keys keep
/// their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  using detail::require_keys;
  RunConfig cfg;
  try {
    require_keys(j, "config",
                 {"model", "drafter", "tree", "temperature", "policy", "cost",
                  "cost_table", "profile_iters", "prompts", "max_new_tokens",
                  "seed", "out_csv", "out_json"});
    if (j.contains("model")) {
      const auto& m = j.at("model");
      require_keys(m, "model",
                   {"vocab_size", "num_layers", "num_experts", "active_experts",
                    "hidden_dim", "context_order", "seed", "logit_scale"});
      read_opt(m, "vocab_size", cfg.model.vocab_size);
      read_opt(m, "num_layers", cfg.model.num_layers);
      read_opt(m, "num_experts", cfg.model.num_experts);
      read_opt(m, "active_experts", cfg.model.active_experts);
      read_opt(m, "hidden_dim", cfg.model.hidden_dim);
      read_opt(m, "context_order", cfg.model.context_order);
      read_opt(m, "seed", cfg.model.seed);
      read_opt(m, "logit_scale", cfg.model.logit_scale);
    }
    if (j.contains("drafter")) {
      const auto& d = j.at("drafter");
      require_keys(d, "drafter", {"alphas", "noise_scale", "noise_seed"});
      read_opt(d, "alphas", cfg.drafter.alphas);
      read_opt(d, "noise_scale", cfg.drafter.noise_scale);
      read_opt(d, "noise_seed", cfg.drafter.noise_seed);
    }
    if (j.contains("tree")) {
      const auto& t = j.at("tree");
      require_keys(t, "tree", {"steps", "topk", "draft_tokens"});
      read_opt(t, "steps", cfg.tree.steps);
      read_opt(t, "topk", cfg.tree.topk);
      read_opt(t, "draft_tokens", cfg.tree.draft_tokens);
    }
    if (j.contains("cost")) {
      const auto& c = j.at("cost");
      require_keys(c, "cost", {"preset", "c0", "c_tok", "c_exp", "c_draft"});
      if (c.contains("preset")) {
        const auto preset = c.at("preset").get<std::string>();
        if (preset == "expert_dominated") {
          cfg.cost = CostParams::expert_dominated();
        } else if (preset == "dense") {
          cfg.cost = CostParams::dense();
        } else {
          throw ConfigError("cost.preset must be expert_dominated or dense");
        }
      }
      read_opt(c, "c0", cfg.cost.c0);
      read_opt(c, "c_tok", cfg.cost.c_tok);
      read_opt(c, "c_exp", cfg.cost.c_exp);
      read_opt(c, "c_draft", cfg.cost.c_draft);
    }
    if (j.contains("prompts")) {
      const auto& p = j.at("prompts");
      require_keys(p, "prompts", {"count", "length", "seed"});
      read_opt(p, "count", cfg.prompts.count);
      read_opt(p, "length", cfg.prompts.length);
      read_opt(p, "seed", cfg.prompts.seed);
    }
    read_opt(j, "temperature", cfg.temperature);
    read_opt(j, "policy", cfg.policy);
    read_opt(j, "cost_table", cfg.cost_table);
    read_opt(j, "profile_iters", cfg.profile_iters);
    read_opt(j, "max_new_tokens", cfg.max_new_tokens);
    read_opt(j, "seed", cfg.seed);
    read_opt(j, "out_csv", cfg.out_csv);
    read_opt(j, "out_json", cfg.out_json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

struct IterationStats {
  std::size_t step = 0;  // iteration index within one prompt
  std::size_t k_star = 0;
  std::size_t verified_tokens = 0;
  std::size_t accepted_len = 0;
  std::size_t committed = 0;
  std::size_t union_size_total = 0;
  double sim_latency = 0.0;
  double utility = 0.0;

  friend bool operator==(const IterationStats&, const IterationStats&) = default;
};

struct DecodeResult {
  std::vector<Token> tokens;  // exactly max_new_tokens generated tokens
  std::vector<IterationStats> stats;
};

struct Aggregate {
  std::size_t iterations = 0;
  std::size_t tokens = 0;           // committed tokens, summed over rows
  double mat = 0.0;                 // mean committed tokens per iteration
  double mean_accepted_len = 0.0;   // mean accepted tree nodes (root included)
  double mean_verified_tokens = 0.0;
  double mean_union_size = 0.0;
  double mean_latency = 0.0;
  double total_latency = 0.0;
  double tpot = 0.0;                // total latency / committed tokens
  double tokens_per_sec = 0.0;      // latency units read as milliseconds
  double speedup = 0.0;             // autoregressive cost / tpot
};

inline Aggregate aggregate(std::span<const IterationStats> rows, double ar_cost) {
  Aggregate a;
  a.iterations = rows.size();
  if (rows.empty()) return a;
  double accepted = 0.0, verified = 0.0, unions = 0.0;
  for (const auto& r : rows) {
    a.tokens += r.committed;
    accepted += static_cast<double>(r.accepted_len);
    verified += static_cast<double>(r.verified_tokens);
    unions += static_cast<double>(r.union_size_total);
    a.total_latency += r.sim_latency;
  }
  const auto n = static_cast<double>(rows.size());
  a.mat = static_cast<double>(a.tokens) / n;
  a.mean_accepted_len = accepted / n;
  a.mean_verified_tokens = verified / n;
  a.mean_union_size = unions / n;
  a.mean_latency = a.total_latency / n;
  a.tpot = a.total_latency / static_cast<double>(a.tokens);
  a.tokens_per_sec = 1000.0 / a.tpot;
  a.speedup = ar_cost / a.tpot;
  return a;
}

struct PromptSpan {
  double alpha = 0.0;
  std::size_t rows = 0;
};

struct PolicyReport {
  std::string policy;
  Aggregate overall;
  std::vector<std::pair<double, Aggregate>> by_alpha;  // ascending alpha
  std::vector<PromptSpan> prompts;
  std::vector<IterationStats> rows;  // prompts in order, steps restart at 0
  std::vector<std::vector<Token>> outputs;
};

struct Report {
  double ar_cost = 0.0;
  std::string config_hash;
  std::vector<PolicyReport> policies;

  const PolicyReport& find(std::string_view policy) const {
    for (const auto& p : policies) {
      if (p.policy == policy) return p;
    }
    throw InvalidInput("Report: no policy '" + std::string(policy) + "'");
  }
};

struct SweepRow {
  std::size_t k = 0;
  double mean_union_size = 0.0;
  double mean_latency = 0.0;
};

/// Owns the target model and the cost table for one configuration.
class Harness {
 public:
  // Loads the cost table from `config.cost_table` or profiles one.
  explicit Harness(RunConfig config)
      : config_(std::move(config)), model_(config_.model) {
    config_.validate();
    if (config_.cost_table.empty()) {
      table_ = profile();
    } else {
      table_ = load_cost_table(config_.cost_table);
    }
    check_table();
  }

  Harness(RunConfig config, CostTable table)
      : config_(std::move(config)), model_(config_.model), table_(std::move(table)) {
    config_.validate();
    table_.validate();
    check_table();
  }

  const RunConfig& config() const noexcept { return config_; }
  const MoETarget& model() const noexcept { return model_; }
  const CostTable& cost_table() const noexcept { return table_; }

  // Profiles a table from this config's model, cost params and tree shape.
  // The profiling drafter uses the mean configured alpha.
  CostTable profile() const {
    double mean_alpha = 0.0;
    for (double a : config_.drafter.alphas) mean_alpha += a;
    mean_alpha /= static_cast<double>(config_.drafter.alphas.size());
    const Drafter drafter(model_, mean_alpha, config_.drafter.noise_seed,
                          config_.drafter.noise_scale);
    Rng rng(derive_seed(config_.seed, kProfileStream));
    return profile_costs(model_, drafter, config_.cost, config_.tree,
                         config_.profile_iters, rng);
  }

  std::vector<std::vector<Token>> prompts() const {
    Rng rng(config_.prompts.seed);
    std::vector<std::vector<Token>> out(config_.prompts.count);
    for (auto& p : out) {
      p.resize(config_.prompts.length);
      for (Token& t : p) t = static_cast<Token>(rng.below(model_.vocab_size()));
    }
    return out;
  }

  double prompt_alpha(std::size_t index) const {
    const auto& alphas = config_.drafter.alphas;
    return alphas[index % alphas.size()];
  }

  Drafter drafter_for(double alpha) const {
    return Drafter(model_, alpha, config_.drafter.noise_seed,
                   config_.drafter.noise_scale);
  }

  /// One decode: sample the root from the target, draft a tree, keep the
  /// budgeted top nodes, let the policy pick k*, verify the top-k* prefix and
  /// commit the accepted path plus the bonus token. Repeats until
  /// max_new_tokens are generated; the output is cut to exactly that length.
  DecodeResult decode(std::span<const Token> prompt, const PolicySpec& policy,
                      const Drafter& drafter, Rng& rng) const {
    if (prompt.empty()) throw InvalidInput("decode: empty prompt");
    const double temperature = config_.temperature;
    const std::size_t max_new = config_.max_new_tokens;
    const std::size_t routed_per_token =
        model_.config().num_layers * model_.config().active_experts;
    std::vector<Token> context(prompt.begin(), prompt.end());
    DecodeResult result;

    auto next_token = [&](std::span<const Token> ctx) {
      const Distribution p = model_.target_dist(ctx, temperature);
      return static_cast<Token>(temperature == 0.0 ? p.argmax() : sample(p, rng));
    };

    for (std::size_t step = 0; result.tokens.size() < max_new; ++step) {
      IterationStats row;
      row.step = step;
      if (policy.kind == PolicySpec::Kind::kAutoregressive) {
        const Token t = next_token(context);
        context.push_back(t);
        result.tokens.push_back(t);
        row.k_star = 1;
        row.verified_tokens = 1;
        row.accepted_len = 0;
        row.committed = 1;
        row.union_size_total = routed_per_token;
        row.sim_latency = table_.ar_cost;
        row.utility = 1.0;
        result.stats.push_back(row);
        continue;
      }

      const Token root = next_token(context);
      auto tree = std::make_shared<const DraftTree>(
          build_tree(drafter, root, context, config_.tree.steps,
                     config_.tree.topk, config_.tree.draft_tokens));
      const AcceptEstimate estimate =
          estimated_accept_prefix_sums(*tree, config_.tree.budget());
      const PolicyDecision decision = select_prefix(policy, *tree, estimate, table_);
      const TreePrefix prefix = prune_topk(tree, decision.k_star);
      const VerifyResult verified =
          temperature == 0.0 ? verify_greedy(prefix, model_)
                             : verify_sampling(prefix, model_, temperature, rng);

      for (Token t : verified.committed_tokens) {
        context.push_back(t);
        result.tokens.push_back(t);
      }
      row.k_star = decision.k_star;
      row.verified_tokens = prefix.k();
      row.accepted_len = verified.accepted_len;
      row.committed = verified.committed_tokens.size();
      row.union_size_total = verified.activation.union_size_total;
      row.sim_latency = simulate_verify_cost(config_.cost, prefix.k(),
                                             verified.activation,
                                             config_.tree.steps);
      row.utility = decision.utility;
      EVICT_CHECK(row.committed == row.accepted_len + 1 && row.committed >= 1,
                  "iteration committed no tokens");
      result.stats.push_back(row);
    }
    result.tokens.resize(max_new);
    return result;
  }

  // Every prompt under one policy. Prompt i always uses the Rng stream
  // derive_seed(seed, i), so policies see paired randomness.
  PolicyReport run_policy(const PolicySpec& policy) const {
    PolicyReport rep;
    rep.policy = policy.to_string();
    const auto all_prompts = prompts();
    std::map<double, std::vector<IterationStats>> per_alpha;
    for (std::size_t i = 0; i < all_prompts.size(); ++i) {
      const double alpha = prompt_alpha(i);
      const Drafter drafter = drafter_for(alpha);
      Rng rng(derive_seed(config_.seed, i));
      auto decoded = decode(all_prompts[i], policy, drafter, rng);
      rep.prompts.push_back({alpha, decoded.stats.size()});
      auto& bucket = per_alpha[alpha];
      bucket.insert(bucket.end(), decoded.stats.begin(), decoded.stats.end());
      rep.rows.insert(rep.rows.end(), decoded.stats.begin(), decoded.stats.end());
      rep.outputs.push_back(std::move(decoded.tokens));
    }
    rep.overall = aggregate(rep.rows, table_.ar_cost);
    for (const auto& [alpha, rows] : per_alpha) {
      rep.by_alpha.emplace_back(alpha, aggregate(rows, table_.ar_cost));
    }
    return rep;
  }

  Report run_benchmark(std::span<const PolicySpec> policies) const {
    if (policies.empty()) throw ConfigError("run_benchmark: no policies");
    Report report;
    report.ar_cost = table_.ar_cost;
    report.config_hash = table_.meta.config_hash;
    for (const auto& p : policies) report.policies.push_back(run_policy(p));
    return report;
  }

  // Fixed-k runs over the grid: mean union size and iteration latency.
  std::vector<SweepRow> sweep_tree_size(std::span<const std::size_t> k_grid) const {
    std::vector<SweepRow> out;
    for (std::size_t k : k_grid) {
      if (k < 1 || k > config_.tree.budget()) {
        throw ConfigError("sweep: k=" + std::to_string(k) +
                          " outside the tree budget");
      }
      PolicySpec spec{PolicySpec::Kind::kFixed, static_cast<double>(k)};
      const auto rep = run_policy(spec);
      out.push_back({k, rep.overall.mean_union_size, rep.overall.mean_latency});
    }
    return out;
  }

  static constexpr std::uint64_t kProfileStream = 0xC0575EEDULL;

 private:
  void check_table() const {
    if (table_.size() < config_.tree.budget()) {
      throw ConfigError("cost table covers " + std::to_string(table_.size()) +
                        " prefix sizes, tree budget needs " +
                        std::to_string(config_.tree.budget()));
    }
  }

  RunConfig config_;
  MoETarget model_;
  CostTable table_;
};

// ---------------------------------------------------------------------------
// Report emission. Doubles use %.17g so every aggregate can be recomputed
// from the CSV bit-for-bit.

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline constexpr const char* kCsvHeader =
    "step,k_star,verified_tokens,accepted_len,committed,union_size_total,"
    "sim_latency,utility";

inline std::string rows_to_csv(std::span<const IterationStats> rows) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.step) + ',' + std::to_string(r.k_star) + ',' +
           std::to_string(r.verified_tokens) + ',' +
           std::to_string(r.accepted_len) + ',' + std::to_string(r.committed) +
           ',' + std::to_string(r.union_size_total) + ',' +
           format_double(r.sim_latency) + ',' + format_double(r.utility) + '\n';
  }
  return out;
}

inline std::vector<IterationStats> rows_from_csv(const std::string& text) {
  std::vector<IterationStats> rows;
  std::size_t pos = text.find('\n');
  if (pos == std::string::npos || text.substr(0, pos) != kCsvHeader) {
    throw InvalidInput("rows_from_csv: missing or wrong header");
  }
  ++pos;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    const std::string line = text.substr(pos, end - pos);
    pos = end == std::string::npos ? text.size() : end + 1;
    if (line.empty()) continue;
    IterationStats r;
    unsigned long long f[6];
    if (std::sscanf(line.c_str(), "%llu,%llu,%llu,%llu,%llu,%llu,%lf,%lf", &f[0],
                    &f[1], &f[2], &f[3], &f[4], &f[5], &r.sim_latency,
                    &r.utility) != 8) {
      throw InvalidInput("rows_from_csv: malformed line '" + line + "'");
    }
    r.step = f[0];
    r.k_star = f[1];
    r.verified_tokens = f[2];
    r.accepted_len = f[3];
    r.committed = f[4];
    r.union_size_total = f[5];
    rows.push_back(r);
  }
  return rows;
}

inline nlohmann::json to_json(const Aggregate& a) {
  return nlohmann::json{{"iterations", a.iterations},
                        {"tokens", a.tokens},
                        {"mat", a.mat},
                        {"mean_accepted_len", a.mean_accepted_len},
                        {"mean_verified_tokens", a.mean_verified_tokens},
                        {"mean_union_size", a.mean_union_size},
                        {"mean_latency", a.mean_latency},
                        {"total_latency", a.total_latency},
                        {"tpot", a.tpot},
                        {"tokens_per_sec", a.tokens_per_sec},
                        {"speedup", a.speedup}};
}

inline nlohmann::json to_json(const Report& report) {
  nlohmann::json policies = nlohmann::json::array();
  for (const auto& p : report.policies) {
    nlohmann::json by_alpha = nlohmann::json::array();
    for (const auto& [alpha, agg] : p.by_alpha) {
      auto entry = to_json(agg);
      entry["alpha"] = alpha;
      by_alpha.push_back(std::move(entry));
    }
    nlohmann::json prompts = nlohmann::json::array();
    for (const auto& s : p.prompts) {
      prompts.push_back({{"alpha", s.alpha}, {"rows", s.rows}});
    }
    policies.push_back({{"policy", p.policy},
                        {"overall", to_json(p.overall)},
                        {"by_alpha", std::move(by_alpha)},
                        {"prompts", std::move(prompts)}});
  }
  return nlohmann::json{{"ar_cost", report.ar_cost},
                        {"config_hash", report.config_hash},
                        {"policies", std::move(policies)}};
}

inline std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::string out = "k,mean_union_size,mean_latency\n";
  for (const auto& r : rows) {
    out += std::to_string(r.k) + ',' + format_double(r.mean_union_size) + ',' +
           format_double(r.mean_latency) + '\n';
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << text;
  if (!out) throw IoError(path, "write failed");
}

// "out.csv" + "fixed:32" -> "out.fixed-32.csv"
inline std::string policy_output_path(const std::string& path,
                                      const std::string& policy) {
  std::string tag = policy;
  for (char& c : tag) {
    if (c == ':') c = '-';
  }
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return path + "." + tag;
  }
  return path.substr(0, dot) + "." + tag + path.substr(dot);
}

}  // namespace evict
