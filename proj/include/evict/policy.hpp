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

// Verification-budget policies. Each returns how many of the tree's best
// nodes (in prefix_sequence order) go to the target.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "evict/cost_model.hpp"
#include "evict/draft_tree.hpp"
#include "evict/errors.hpp"
#include "evict/estimator.hpp"

namespace evict {

struct PolicyDecision {
  std::size_t k_star = 1;
  double utility = 0.0;         // C_AR * S[k*] / C(k*)
  std::vector<double> scanned;  // S[k] / C(k) per k; empty for baselines
};

// Speculation utility of verifying the first k nodes.
inline double utility_at(const AcceptEstimate& estimate, const CostTable& table,
                         std::size_t k) {
  return table.ar_cost * estimate.at(k) / table.cost(k);
}

/// Utility-maximizing prefix: k* = argmax_k S[k] / C(k), first maximum wins.
/// Takes no tunable parameter; everything comes from the drafter's scores and
/// the profiled table.
inline PolicyDecision select_prefix_evict(const AcceptEstimate& estimate,
                                          const CostTable& table) {
  if (estimate.size() == 0) {
    throw InvalidInput("select_prefix_evict: empty estimate");
  }
  if (estimate.size() > table.size()) {
    throw InvalidInput("select_prefix_evict: estimate longer than cost table");
  }
  PolicyDecision d;
  d.scanned.resize(estimate.size());
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    d.scanned[i] = estimate.prefix_sums[i] / table.per_k[i];
  }
  const auto best = std::max_element(d.scanned.begin(), d.scanned.end());
  d.k_star = static_cast<std::size_t>(best - d.scanned.begin()) + 1;
  d.utility = utility_at(estimate, table, d.k_star);
  return d;
}

// Fixed budget, clamped to the tree. Score-agnostic.
inline PolicyDecision select_prefix_fixed(std::size_t k_fixed,
                                          std::size_t tree_size) {
  if (tree_size == 0) throw InvalidInput("select_prefix_fixed: empty tree");
  PolicyDecision d;
  d.k_star = std::clamp<std::size_t>(k_fixed, 1, tree_size);
  return d;
}

// Smallest k whose score coverage S[k] / S[K] reaches rho.
inline PolicyDecision select_prefix_coverage(const AcceptEstimate& estimate,
                                             double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) {
    throw InvalidInput("select_prefix_coverage: rho must lie in (0, 1]");
  }
  if (estimate.size() == 0) {
    throw InvalidInput("select_prefix_coverage: empty estimate");
  }
  const double total = estimate.prefix_sums.back();
  PolicyDecision d;
  d.k_star = estimate.size();
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    if (estimate.prefix_sums[i] / total >= rho) {
      d.k_star = i + 1;
      break;
    }
  }
  return d;
}

// Dynamic-depth analog: keep layers down to the deepest one whose best node
// still has cum_score >= threshold, and verify as many nodes as those layers
// hold (capped at `budget`, 0 meaning the whole tree).
inline PolicyDecision select_depth_confidence(const DraftTree& tree,
                                              double threshold,
                                              std::size_t budget = 0) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw InvalidInput("select_depth_confidence: threshold must lie in [0, 1]");
  }
  const auto& layers = tree.layers();
  std::size_t kept_depth = 0;
  for (std::size_t depth = 0; depth < layers.size(); ++depth) {
    double best = 0.0;
    for (NodeId id : layers[depth]) best = std::max(best, tree.node(id).cum_score);
    if (best >= threshold) kept_depth = depth;
  }
  std::size_t k = 0;
  for (std::size_t depth = 0; depth <= kept_depth; ++depth) k += layers[depth].size();
  if (budget != 0) k = std::min(k, budget);
  PolicyDecision d;
  d.k_star = std::max<std::size_t>(k, 1);
  return d;
}

/// Parsed form of a policy string: "evict", "fixed:<k>", "coverage:<rho>",
/// "depthconf:<t>" or "autoregressive".
struct PolicySpec {
  enum class Kind { kEvict, kFixed, kCoverage, kDepthConfidence, kAutoregressive };

  Kind kind = Kind::kEvict;
  double param = 0.0;

  static PolicySpec parse(std::string_view text) {
    const auto colon = text.find(':');
    const std::string_view name = text.substr(0, colon);
    const std::string_view arg =
        colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
    auto number = [&](std::string_view what) {
      if (arg.empty()) {
        throw ConfigError("policy '" + std::string(text) + "' needs " +
                          std::string(what));
      }
      double value = 0.0;
      const auto res = std::from_chars(arg.data(), arg.data() + arg.size(), value);
      if (res.ec != std::errc{} || res.ptr != arg.data() + arg.size() ||
          !std::isfinite(value)) {
        throw ConfigError("policy '" + std::string(text) + "': bad number");
      }
      return value;
    };
    auto no_arg = [&] {
      if (colon != std::string_view::npos) {
        throw ConfigError("policy '" + std::string(text) + "' takes no argument");
      }
    };

    PolicySpec spec;
    if (name == "evict") {
      no_arg();
      spec.kind = Kind::kEvict;
    } else if (name == "autoregressive") {
      no_arg();
      spec.kind = Kind::kAutoregressive;
    } else if (name == "fixed") {
      spec.kind = Kind::kFixed;
      spec.param = number("a node count");
      if (spec.param < 1.0 || spec.param != std::floor(spec.param)) {
        throw ConfigError("policy fixed:<k> needs an integer k >= 1");
      }
    } else if (name == "coverage") {
      spec.kind = Kind::kCoverage;
      spec.param = number("rho");
      if (!(spec.param > 0.0 && spec.param <= 1.0)) {
        throw ConfigError("policy coverage:<rho> needs rho in (0, 1]");
      }
    } else if (name == "depthconf") {
      spec.kind = Kind::kDepthConfidence;
      spec.param = number("a threshold");
      if (!(spec.param >= 0.0 && spec.param <= 1.0)) {
        throw ConfigError("policy depthconf:<t> needs t in [0, 1]");
      }
    } else {
      throw ConfigError("unknown policy '" + std::string(text) + "'");
    }
    return spec;
  }

  std::string to_string() const {
    char buf[64];
    switch (kind) {
      case Kind::kEvict:
        return "evict";
      case Kind::kAutoregressive:
        return "autoregressive";
      case Kind::kFixed:
        std::snprintf(buf, sizeof buf, "fixed:%.0f", param);
        return buf;
      case Kind::kCoverage:
        std::snprintf(buf, sizeof buf, "coverage:%g", param);
        return buf;
      case Kind::kDepthConfidence:
        std::snprintf(buf, sizeof buf, "depthconf:%g", param);
        return buf;
    }
    return "?";
  }
};

// Dispatches a tree policy. `estimate` must cover the budgeted tree.
inline PolicyDecision select_prefix(const PolicySpec& spec, const DraftTree& tree,
                                    const AcceptEstimate& estimate,
                                    const CostTable& table) {
  PolicyDecision d;
  switch (spec.kind) {
    case PolicySpec::Kind::kEvict:
      return select_prefix_evict(estimate, table);
    case PolicySpec::Kind::kFixed:
      d = select_prefix_fixed(static_cast<std::size_t>(spec.param), estimate.size());
      break;
    case PolicySpec::Kind::kCoverage:
      d = select_prefix_coverage(estimate, spec.param);
      break;
    case PolicySpec::Kind::kDepthConfidence:
      d = select_depth_confidence(tree, spec.param, estimate.size());
      break;
    case PolicySpec::Kind::kAutoregressive:
      throw InvalidInput("select_prefix: autoregressive decoding has no tree");
  }
  d.utility = utility_at(estimate, table, d.k_star);
  return d;
}

}  // namespace evict
