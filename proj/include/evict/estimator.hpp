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

// Accepted-length math for a draft tree.
//
// With Score(v) the draft path product from the root (root = 1), the
// pre-verification estimate of the accepted length of the k best nodes is
// the prefix sum S[k] of scores in prefix_sequence order. Given target
// probabilities instead, the expected accepted length of a prefix is exactly
// the sum over kept nodes of their target path products, because a node is
// on the accepted path iff every edge on its path was accepted.
//
// Accepted length counts committed tree nodes including the root; the bonus
// token is not part of it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "evict/distribution.hpp"
#include "evict/draft_tree.hpp"
#include "evict/errors.hpp"
#include "evict/moe_target.hpp"
#include "evict/verifier.hpp"

namespace evict {

inline constexpr std::size_t kEnumerationNodeLimit = 16;

struct AcceptEstimate {
  // prefix_sums[k - 1] = S[k], the summed score of the first k nodes.
  std::vector<double> prefix_sums;
  std::optional<double> exact_value;

  std::size_t size() const noexcept { return prefix_sums.size(); }

  double at(std::size_t k) const {
    if (k < 1 || k > prefix_sums.size()) {
      throw InvalidInput("AcceptEstimate::at: k out of range");
    }
    return prefix_sums[k - 1];
  }
};

// Prefix sums over the first `max_k` nodes of prefix_sequence (all nodes
// when max_k is 0 or larger than the tree).
inline AcceptEstimate estimated_accept_prefix_sums(const DraftTree& tree,
                                                   std::size_t max_k = 0) {
  const auto order = prefix_sequence(tree);
  const std::size_t k_max =
      (max_k == 0 || max_k > order.size()) ? order.size() : max_k;
  AcceptEstimate est;
  est.prefix_sums.reserve(k_max);
  double acc = 0.0;
  for (std::size_t i = 0; i < k_max; ++i) {
    acc += tree.node(order[i]).cum_score;
    est.prefix_sums.push_back(acc);
  }
  return est;
}

namespace detail {

inline void check_node_probs(const TreePrefix& prefix,
                             std::span<const double> target_probs) {
  if (target_probs.size() != prefix.tree().size()) {
    throw InvalidInput("target_probs must have one entry per tree node");
  }
  for (NodeId id : prefix.kept_ids()) {
    if (id == 0) continue;
    const double p = target_probs[id];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidInput("target probability outside [0, 1]");
    }
  }
}

}  // namespace detail

/// Closed form: sum over kept nodes of the product of target probabilities
/// along the path from the root. `target_probs` is indexed by node id; the
/// root's entry is ignored and treated as 1.
inline double exact_expected_accept_len(const TreePrefix& prefix,
                                        std::span<const double> target_probs) {
  detail::check_node_probs(prefix, target_probs);
  const DraftTree& tree = prefix.tree();
  // Kept ids need not be topologically sorted, so memoize path products.
  std::vector<double> path_prob(tree.size(), -1.0);
  path_prob[0] = 1.0;
  double total = 0.0;
  for (NodeId id : prefix.kept_ids()) {
    std::vector<NodeId> pending;
    NodeId cur = id;
    while (path_prob[cur] < 0.0) {
      pending.push_back(cur);
      cur = tree.node(cur).parent;
    }
    for (auto it = pending.rbegin(); it != pending.rend(); ++it) {
      path_prob[*it] = path_prob[tree.node(*it).parent] * target_probs[*it];
    }
    total += path_prob[id];
  }
  return total;
}

/// Expected accepted length by enumerating every outcome of the sequential
/// child-acceptance process: try children in turn, accept each with its
/// current probability, and on rejection zero it and rescale the survivors
/// by 1 / (1 - p). Each terminal outcome contributes (probability x nodes on
/// its accepted path).
///
/// `sibling_rank`, when given, has one entry per tree node and fixes the
/// order siblings are tried in (lower first). Defaults to order_key order.
inline double enumerate_accept_oracle(
    const TreePrefix& prefix, std::span<const double> target_probs,
    std::span<const std::size_t> sibling_rank = {}) {
  if (prefix.k() > kEnumerationNodeLimit) {
    throw ConfigError("enumerate_accept_oracle: prefix exceeds " +
                      std::to_string(kEnumerationNodeLimit) + " nodes");
  }
  detail::check_node_probs(prefix, target_probs);
  if (!sibling_rank.empty() && sibling_rank.size() != prefix.tree().size()) {
    throw InvalidInput("sibling_rank must have one entry per tree node");
  }

  double expectation = 0.0;
  auto visit = [&](auto&& self, NodeId u, double reach_prob,
                   std::size_t path_len) -> void {
    auto kids = prefix.kept_children(u);
    if (!sibling_rank.empty()) {
      std::stable_sort(kids.begin(), kids.end(), [&](NodeId a, NodeId b) {
        return sibling_rank[a] < sibling_rank[b];
      });
    }
    double sum = 0.0;
    for (NodeId c : kids) sum += target_probs[c];
    if (sum > 1.0 + 1e-12) {
      throw InvalidInput("sibling target probabilities sum above 1");
    }
    // Current (renormalized) probabilities of the children not yet tried.
    std::vector<double> current(kids.size());
    for (std::size_t i = 0; i < kids.size(); ++i) {
      current[i] = target_probs[kids[i]];
    }
    double stop_prob = reach_prob;
    for (std::size_t i = 0; i < kids.size() && stop_prob > 0.0; ++i) {
      const double accept = std::min(current[i], 1.0);
      if (accept > 0.0) self(self, kids[i], stop_prob * accept, path_len + 1);
      stop_prob *= 1.0 - accept;
      if (accept < 1.0) {
        for (std::size_t j = i + 1; j < kids.size(); ++j) {
          current[j] /= 1.0 - accept;
        }
      }
    }
    expectation += stop_prob * static_cast<double>(path_len);
  };
  visit(visit, 0, 1.0, 1);
  return expectation;
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Runs the verifier `trials` times and averages the accepted length.
/// Temperature 0 uses greedy verification.
inline MonteCarloEstimate mc_accept_oracle(const TreePrefix& prefix,
                                           const MoETarget& model, Rng& rng,
                                           std::size_t trials,
                                           double temperature = 1.0) {
  if (trials == 0) throw InvalidInput("mc_accept_oracle: trials must be >= 1");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto walk = temperature == 0.0
                          ? detail::walk_greedy(prefix, model)
                          : detail::walk_sampling(prefix, model, temperature, rng);
    const auto len = static_cast<double>(walk.path.size());
    sum += len;
    sum_sq += len * len;
  }
  const auto n = static_cast<double>(trials);
  const double mean = sum / n;
  const double var = trials > 1 ? std::max(0.0, (sum_sq - n * mean * mean) /
                                                    (n - 1.0))
                                : 0.0;
  return {mean, std::sqrt(var / n)};
}

}  // namespace evict
