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

// Target-side verification of a draft tree prefix.
//
// Sampling rule: at the current node, try the kept children in order_key
// order and accept child c with its current target probability p(c). A
// rejected child's token is zeroed and the remaining distribution is scaled
// by 1 / (1 - p(c)). When no child is accepted, or the node has no kept
// children, a bonus token is drawn from whatever residual is left.
//
// Greedy rule (temperature 0): follow the kept child whose token is the
// target argmax; the bonus is the argmax where the path stops.

#include <cstddef>
#include <span>
#include <vector>

#include "evict/distribution.hpp"
#include "evict/draft_tree.hpp"
#include "evict/errors.hpp"
#include "evict/moe_target.hpp"

namespace evict {

struct VerifyResult {
  std::vector<NodeId> accepted_path;  // starts at the root
  Token bonus_token = 0;
  std::vector<Token> committed_tokens;  // path tokens, then the bonus
  ExpertActivation activation;          // over every node of the prefix
  std::size_t accepted_len = 0;
};

// Expert union of one target pass over all nodes of the prefix.
inline ExpertActivation prefix_activation(const TreePrefix& prefix,
                                          const MoETarget& model) {
  ExpertUnionBuilder builder(model);
  for (NodeId id : prefix.kept_ids()) {
    builder.add(prefix.tree().context_of(id));
  }
  return builder.activation();
}

// p(token of v | context of parent(v)) for every node, root fixed at 1.
inline std::vector<double> target_node_probs(const DraftTree& tree,
                                             const MoETarget& model,
                                             double temperature) {
  std::vector<double> probs(tree.size(), 1.0);
  for (const TreeNode& u : tree.nodes()) {
    const auto kids = tree.children(u.id);
    if (kids.empty()) continue;
    const Distribution p = model.target_dist(tree.context_of(u.id), temperature);
    for (NodeId c : kids) probs[c] = p[tree.node(c).token];
  }
  return probs;
}

namespace detail {

struct Walk {
  std::vector<NodeId> path;
  Token bonus = 0;
};

inline Walk walk_sampling(const TreePrefix& prefix, const MoETarget& model,
                          double temperature, Rng& rng) {
  const DraftTree& tree = prefix.tree();
  Walk walk;
  walk.path.push_back(0);
  NodeId u = 0;
  std::vector<double> residual;
  while (true) {
    const Distribution p = model.target_dist(tree.context_of(u), temperature);
    residual.assign(p.probs().begin(), p.probs().end());
    bool advanced = false;
    for (NodeId c : prefix.kept_children(u)) {
      const Token tok = tree.node(c).token;
      const double pc = residual[tok];
      if (rng.uniform() < pc) {
        u = c;
        walk.path.push_back(c);
        advanced = true;
        break;
      }
      residual[tok] = 0.0;
      const double rest = 1.0 - pc;
      for (double& x : residual) x /= rest;
    }
    if (!advanced) {
      walk.bonus = static_cast<Token>(sample_weights(residual, rng));
      return walk;
    }
  }
}

inline Walk walk_greedy(const TreePrefix& prefix, const MoETarget& model) {
  const DraftTree& tree = prefix.tree();
  Walk walk;
  walk.path.push_back(0);
  NodeId u = 0;
  while (true) {
    const auto best = static_cast<Token>(
        model.target_dist(tree.context_of(u), 0.0).argmax());
    bool advanced = false;
    for (NodeId c : prefix.kept_children(u)) {
      if (tree.node(c).token == best) {
        u = c;
        walk.path.push_back(c);
        advanced = true;
        break;
      }
    }
    if (!advanced) {
      walk.bonus = best;
      return walk;
    }
  }
}

inline VerifyResult finish(const TreePrefix& prefix, const MoETarget& model,
                           Walk walk) {
  VerifyResult out;
  for (NodeId id : walk.path) {
    out.committed_tokens.push_back(prefix.tree().node(id).token);
  }
  out.committed_tokens.push_back(walk.bonus);
  out.accepted_len = walk.path.size();
  out.accepted_path = std::move(walk.path);
  out.bonus_token = walk.bonus;
  out.activation = prefix_activation(prefix, model);
  return out;
}

}  // namespace detail

inline VerifyResult verify_sampling(const TreePrefix& prefix,
                                    const MoETarget& model, double temperature,
                                    Rng& rng) {
  if (!(temperature > 0.0)) {
    throw InvalidInput("verify_sampling: temperature must be > 0, use "
                       "verify_greedy at temperature 0");
  }
  return detail::finish(prefix, model,
                        detail::walk_sampling(prefix, model, temperature, rng));
}

inline VerifyResult verify_greedy(const TreePrefix& prefix,
                                  const MoETarget& model) {
  return detail::finish(prefix, model, detail::walk_greedy(prefix, model));
}

}  // namespace evict
