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

// Simulated verification latency and its offline-profiled lookup table.
//
// One speculative iteration costs
//   c0 + c_draft * steps + c_tok * k + c_exp * (expert-layer activations)
// in abstract latency units (treated as milliseconds when reporting
// throughput). The expert term stands in for the weight traffic of every
// distinct expert a verification pass touches.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "evict/distribution.hpp"
#include "evict/draft_tree.hpp"
#include "evict/drafter.hpp"
#include "evict/errors.hpp"
#include "evict/moe_target.hpp"

namespace evict {

struct CostParams {
  double c0 = 20.0;
  double c_tok = 0.1;
  double c_exp = 0.5;
  double c_draft = 1.0;

  // Expert loading dominates large trees: the regime where verifying fewer
  // nodes pays.
  static CostParams expert_dominated() { return {20.0, 0.1, 0.5, 1.0}; }
  // No expert term, cost is affine in k.
  static CostParams dense() { return {20.0, 0.1, 0.0, 1.0}; }

  void validate() const {
    for (double x : {c0, c_tok, c_exp, c_draft}) {
      if (!std::isfinite(x) || x < 0.0) {
        throw ConfigError("CostParams: coefficients must be finite and >= 0");
      }
    }
    if (c0 == 0.0 && c_tok == 0.0 && c_exp == 0.0 && c_draft == 0.0) {
      throw ConfigError("CostParams: at least one coefficient must be > 0");
    }
  }

  friend bool operator==(const CostParams&, const CostParams&) = default;
};

inline double verify_cost_from_union(const CostParams& params, std::size_t k,
                                     std::size_t union_size_total,
                                     std::size_t steps_drafted) {
  return params.c0 + params.c_draft * static_cast<double>(steps_drafted) +
         params.c_tok * static_cast<double>(k) +
         params.c_exp * static_cast<double>(union_size_total);
}

inline double simulate_verify_cost(const CostParams& params, std::size_t k,
                                   const ExpertActivation& activation,
                                   std::size_t steps_drafted) {
  if (k < 1) throw InvalidInput("simulate_verify_cost: k must be >= 1");
  return verify_cost_from_union(params, k, activation.union_size_total,
                                steps_drafted);
}

// Per-token cost of plain autoregressive decoding: one position, one routed
// token per layer, no drafting.
inline double autoregressive_cost(const CostParams& params,
                                  const MoEConfig& config) {
  return params.c0 + params.c_tok +
         params.c_exp *
             static_cast<double>(config.num_layers * config.active_experts);
}

struct ProfileMeta {
  std::size_t num_profile_iters = 0;
  std::uint64_t seed = 0;
  std::string config_hash;

  friend bool operator==(const ProfileMeta&, const ProfileMeta&) = default;
};

/// C(k) for k = 1..per_k.size() plus the autoregressive per-token cost.
struct CostTable {
  std::vector<double> per_k;  // per_k[k - 1] = C(k)
  double ar_cost = 0.0;
  ProfileMeta meta;

  std::size_t size() const noexcept { return per_k.size(); }

  double cost(std::size_t k) const {
    if (k < 1 || k > per_k.size()) {
      throw InvalidInput("CostTable::cost: k out of range");
    }
    return per_k[k - 1];
  }

  void validate() const {
    if (per_k.empty()) throw ConfigError("CostTable: empty per_k");
    for (std::size_t i = 0; i < per_k.size(); ++i) {
      if (!std::isfinite(per_k[i]) || per_k[i] <= 0.0) {
        throw ConfigError("CostTable: entries must be finite and > 0");
      }
      if (i > 0 && per_k[i] < per_k[i - 1]) {
        throw ConfigError("CostTable: per_k must be non-decreasing");
      }
    }
    if (!std::isfinite(ar_cost) || ar_cost <= 0.0) {
      throw ConfigError("CostTable: ar_cost must be finite and > 0");
    }
  }

  friend bool operator==(const CostTable&, const CostTable&) = default;
};

// FNV-1a over a canonical text rendering of everything the table depends on.
inline std::string profile_config_hash(const MoEConfig& model,
                                       const Drafter& drafter,
                                       const CostParams& params,
                                       const TreeParams& tree) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "V=%zu L=%zu N=%zu k=%zu d=%zu n=%zu seed=%llu scale=%.17g "
                "alpha=%.17g nseed=%llu nscale=%.17g "
                "c0=%.17g ctok=%.17g cexp=%.17g cdraft=%.17g "
                "steps=%zu topk=%zu dt=%zu",
                model.vocab_size, model.num_layers, model.num_experts,
                model.active_experts, model.hidden_dim, model.context_order,
                static_cast<unsigned long long>(model.seed), model.logit_scale,
                drafter.alpha(),
                static_cast<unsigned long long>(drafter.noise_seed()),
                drafter.noise_scale(), params.c0, params.c_tok, params.c_exp,
                params.c_draft, tree.steps, tree.topk, tree.draft_tokens);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* p = buf; *p != '\0'; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 0x100000001b3ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

inline constexpr std::size_t kWarmupContextLength = 8;

/// Profiles C(k) for every k up to the tree budget. Each iteration draws a
/// random warmup context, samples a root from the target, builds a full tree
/// and charges every top-k prefix of it. The averaged curve is smoothed with
/// a running max so C(k) never decreases.
inline CostTable profile_costs(const MoETarget& model, const Drafter& drafter,
                               const CostParams& params,
                               const TreeParams& tree_params,
                               std::size_t num_iters, Rng& rng) {
  params.validate();
  tree_params.validate();
  if (num_iters == 0) throw InvalidInput("profile_costs: num_iters must be >= 1");

  const std::size_t budget = tree_params.budget();
  std::vector<double> sums(budget, 0.0);
  const std::uint64_t seed = rng.seed();
  std::vector<Token> context(kWarmupContextLength);
  for (std::size_t iter = 0; iter < num_iters; ++iter) {
    for (Token& t : context) t = static_cast<Token>(rng.below(model.vocab_size()));
    const auto root = static_cast<Token>(
        sample(model.target_dist(context, 1.0), rng));
    const DraftTree tree =
        build_tree(drafter, root, context, tree_params.steps, tree_params.topk,
                   tree_params.draft_tokens);
    const auto order = prefix_sequence(tree);
    ExpertUnionBuilder builder(model);
    for (std::size_t k = 1; k <= budget; ++k) {
      const std::size_t total = builder.add(tree.context_of(order[k - 1]));
      sums[k - 1] +=
          verify_cost_from_union(params, k, total, tree_params.steps);
    }
  }

  CostTable table;
  table.per_k.resize(budget);
  double running = 0.0;
  for (std::size_t i = 0; i < budget; ++i) {
    running = std::max(running, sums[i] / static_cast<double>(num_iters));
    table.per_k[i] = running;
  }
  table.ar_cost = autoregressive_cost(params, model.config());
  table.meta = {num_iters, seed,
                profile_config_hash(model.config(), drafter, params,
                                    tree_params)};
  table.validate();
  return table;
}

inline nlohmann::json to_json(const CostTable& table) {
  return nlohmann::json{
      {"per_k", table.per_k},
      {"ar_cost", table.ar_cost},
      {"meta",
       {{"num_profile_iters", table.meta.num_profile_iters},
        {"seed", table.meta.seed},
        {"config_hash", table.meta.config_hash}}}};
}

inline CostTable cost_table_from_json(const nlohmann::json& j) {
  try {
    CostTable table;
    table.per_k = j.at("per_k").get<std::vector<double>>();
    table.ar_cost = j.at("ar_cost").get<double>();
    if (j.contains("meta")) {
      const auto& m = j.at("meta");
      table.meta.num_profile_iters = m.value("num_profile_iters", std::size_t{0});
      table.meta.seed = m.value("seed", std::uint64_t{0});
      table.meta.config_hash = m.value("config_hash", std::string{});
    }
    table.validate();
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cost table: ") + e.what());
  }
}

inline void save_cost_table(const CostTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << to_json(table).dump(2) << '\n';
  if (!out) throw IoError(path, "write failed");
}

inline CostTable load_cost_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cost_table_from_json(j);
}

}  // namespace evict
