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

// Well-structured draft token trees, cumulative node scores, and
// ancestor-closed top-k pruning.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "evict/distribution.hpp"
#include "evict/drafter.hpp"
#include "evict/errors.hpp"

namespace evict {

using NodeId = std::size_t;

inline constexpr NodeId kNoParent = std::numeric_limits<NodeId>::max();

// Deepest tree accepted anywhere. Keeps path products of linear-space
// probabilities well away from underflow.
inline constexpr std::size_t kMaxTreeDepth = 16;

struct TreeNode {
  NodeId id = 0;
  NodeId parent = kNoParent;
  Token token = 0;
  double q_prob = 1.0;     // draft probability of `token` given its path
  double cum_score = 1.0;  // product of q_prob from the root, root = 1
  std::size_t depth = 0;
  std::size_t order_key = 0;  // creation order, breaks score ties

  bool is_root() const noexcept { return parent == kNoParent; }
};

struct TreeParams {
  std::size_t steps = 4;
  std::size_t topk = 8;
  std::size_t draft_tokens = 32;

  void validate() const {
    if (steps == 0 || topk == 0 || draft_tokens == 0) {
      throw ConfigError("TreeParams: steps, topk and draft_tokens must be >= 1");
    }
    if (steps > kMaxTreeDepth) {
      throw ConfigError("TreeParams: steps exceeds depth guard of " +
                        std::to_string(kMaxTreeDepth));
    }
  }

  std::size_t full_size() const noexcept { return 1 + steps * topk; }

  // Nodes sent for verification at most: the root plus `draft_tokens`.
  std::size_t budget() const noexcept {
    return std::min(full_size(), draft_tokens + 1);
  }

  friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

class DraftTree {
 public:
  // Validates topology and scores. Node i must have id i, parents precede
  // children, and cum_score must equal parent.cum_score * q_prob.
  static DraftTree from_nodes(std::vector<Token> root_context,
                              std::vector<TreeNode> nodes,
                              TreeParams params = {}) {
    return DraftTree(std::move(root_context), std::move(nodes), params);
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const TreeNode& node(NodeId id) const { return nodes_.at(id); }
  std::span<const TreeNode> nodes() const noexcept { return nodes_; }
  const TreeParams& params() const noexcept { return params_; }
  std::span<const Token> root_context() const noexcept { return root_context_; }

  // Node ids per depth, each layer in id order.
  const std::vector<std::vector<NodeId>>& layers() const noexcept {
    return layers_;
  }

  // Children in order_key order.
  std::span<const NodeId> children(NodeId id) const {
    return children_.at(id);
  }

  // Root-to-node path, root first.
  std::vector<NodeId> path_to(NodeId id) const {
    std::vector<NodeId> path;
    for (NodeId cur = id; cur != kNoParent; cur = nodes_.at(cur).parent) {
      path.push_back(cur);
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  // Tokens the target sees at this node: root context, then the path tokens
  // up to and including the node itself.
  std::vector<Token> context_of(NodeId id) const {
    std::vector<Token> ctx = root_context_;
    for (NodeId v : path_to(id)) ctx.push_back(nodes_[v].token);
    return ctx;
  }

 private:
  DraftTree(std::vector<Token> root_context, std::vector<TreeNode> nodes,
            TreeParams params)
      : root_context_(std::move(root_context)),
        nodes_(std::move(nodes)),
        params_(params) {
    if (nodes_.empty()) throw InvalidInput("DraftTree: no nodes");
    const TreeNode& root = nodes_.front();
    if (!root.is_root() || root.id != 0 || root.depth != 0 ||
        root.q_prob != 1.0 || root.cum_score != 1.0) {
      throw InvalidInput("DraftTree: malformed root");
    }
    children_.resize(nodes_.size());
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      const TreeNode& v = nodes_[i];
      if (v.id != i) throw InvalidInput("DraftTree: node id != index");
      if (v.is_root() || v.parent >= i) {
        throw InvalidInput("DraftTree: parent must precede child");
      }
      const TreeNode& p = nodes_[v.parent];
      if (v.depth != p.depth + 1) throw InvalidInput("DraftTree: bad depth");
      if (v.order_key <= p.order_key) {
        throw InvalidInput("DraftTree: child order_key must follow parent's");
      }
      if (v.depth > kMaxTreeDepth) {
        throw ConfigError("DraftTree: depth exceeds guard");
      }
      if (!(v.q_prob >= 0.0 && v.q_prob <= 1.0)) {
        throw InvalidInput("DraftTree: q_prob outside [0, 1]");
      }
      if (std::abs(v.cum_score - p.cum_score * v.q_prob) > 1e-12) {
        throw InvalidInput("DraftTree: cum_score != parent.cum_score * q_prob");
      }
      children_[v.parent].push_back(i);
    }
    for (auto& kids : children_) {
      std::sort(kids.begin(), kids.end(), [&](NodeId a, NodeId b) {
        return nodes_[a].order_key < nodes_[b].order_key;
      });
    }
    for (const TreeNode& v : nodes_) {
      if (layers_.size() <= v.depth) layers_.resize(v.depth + 1);
      layers_[v.depth].push_back(v.id);
    }
  }

  std::vector<Token> root_context_;
  std::vector<TreeNode> nodes_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<std::vector<NodeId>> layers_;
  TreeParams params_;
};

/// Expands a tree layer by layer: every frontier node proposes its `topk`
/// most probable draft tokens, then the layer keeps the `topk` candidates
/// with the highest cumulative score (ties: parent id, then token). Ids, and
/// therefore order keys, follow that rank. The result has 1 + steps * topk
/// nodes.
///
/// `root_context` holds the tokens before `root_token`.
inline DraftTree build_tree(const Drafter& drafter, Token root_token,
                            std::span<const Token> root_context,
                            std::size_t steps, std::size_t topk,
                            std::size_t draft_tokens = 32) {
  const TreeParams params{steps, topk, draft_tokens};
  params.validate();
  const std::size_t V = drafter.target().vocab_size();
  if (topk > V) throw ConfigError("build_tree: topk exceeds vocabulary");
  if (root_token >= V) throw InvalidInput("build_tree: root token out of range");

  std::vector<TreeNode> nodes;
  nodes.reserve(params.full_size());
  nodes.push_back(TreeNode{0, kNoParent, root_token, 1.0, 1.0, 0, 0});

  // Context of each node, kept alongside so expansion does not walk paths.
  std::vector<std::vector<Token>> contexts;
  contexts.emplace_back(root_context.begin(), root_context.end());
  contexts.back().push_back(root_token);

  struct Candidate {
    NodeId parent;
    Token token;
    double q;
    double cum;
  };

  std::vector<NodeId> frontier{0};
  std::vector<std::size_t> order(V);
  for (std::size_t layer = 1; layer <= steps; ++layer) {
    std::vector<Candidate> candidates;
    candidates.reserve(frontier.size() * topk);
    for (NodeId u : frontier) {
      const Distribution q = drafter.draft_dist(contexts[u]);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::partial_sort(order.begin(),
                        order.begin() + static_cast<std::ptrdiff_t>(topk),
                        order.end(), [&](std::size_t a, std::size_t b) {
                          return q[a] > q[b] || (q[a] == q[b] && a < b);
                        });
      for (std::size_t i = 0; i < topk; ++i) {
        const auto tok = static_cast<Token>(order[i]);
        candidates.push_back(
            {u, tok, q[tok], nodes[u].cum_score * q[tok]});
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) {
                if (a.cum != b.cum) return a.cum > b.cum;
                if (a.parent != b.parent) return a.parent < b.parent;
                return a.token < b.token;
              });
    candidates.resize(topk);

    std::vector<NodeId> next;
    for (const Candidate& c : candidates) {
      const NodeId id = nodes.size();
      nodes.push_back(TreeNode{id, c.parent, c.token, c.q, c.cum, layer, id});
      contexts.push_back(contexts[c.parent]);
      contexts.back().push_back(c.token);
      next.push_back(id);
    }
    frontier = std::move(next);
  }

  return DraftTree::from_nodes(
      std::vector<Token>(root_context.begin(), root_context.end()),
      std::move(nodes), params);
}

/// All node ids ordered by (cum_score desc, order_key asc). Every prefix of
/// this sequence is ancestor-closed.
inline std::vector<NodeId> prefix_sequence(const DraftTree& tree) {
  std::vector<NodeId> ids(tree.size());
  std::iota(ids.begin(), ids.end(), NodeId{0});
  const auto nodes = tree.nodes();
  std::stable_sort(ids.begin(), ids.end(), [&](NodeId a, NodeId b) {
    if (nodes[a].cum_score != nodes[b].cum_score) {
      return nodes[a].cum_score > nodes[b].cum_score;
    }
    return nodes[a].order_key < nodes[b].order_key;
  });
  return ids;
}

/// An ancestor-closed subset of a tree's nodes, root included.
class TreePrefix {
 public:
  // Throws InvalidInput unless `ids` is ancestor-closed, duplicate-free and
  // contains the root.
  TreePrefix(std::shared_ptr<const DraftTree> tree, std::vector<NodeId> ids)
      : tree_(std::move(tree)), kept_ids_(std::move(ids)) {
    if (!tree_) throw InvalidInput("TreePrefix: null tree");
    kept_.assign(tree_->size(), false);
    for (NodeId id : kept_ids_) {
      if (id >= tree_->size() || kept_[id]) {
        throw InvalidInput("TreePrefix: bad or duplicate node id");
      }
      kept_[id] = true;
    }
    if (kept_ids_.empty() || !kept_[0]) {
      throw InvalidInput("TreePrefix: root missing");
    }
    if (!is_ancestor_closed()) {
      throw InvalidInput("TreePrefix: node set is not ancestor-closed");
    }
  }

  const DraftTree& tree() const noexcept { return *tree_; }
  const std::shared_ptr<const DraftTree>& tree_ptr() const noexcept {
    return tree_;
  }
  std::span<const NodeId> kept_ids() const noexcept { return kept_ids_; }
  std::size_t k() const noexcept { return kept_ids_.size(); }
  bool contains(NodeId id) const { return id < kept_.size() && kept_[id]; }

  std::vector<NodeId> kept_children(NodeId id) const {
    std::vector<NodeId> out;
    for (NodeId c : tree_->children(id)) {
      if (kept_[c]) out.push_back(c);
    }
    return out;
  }

  double score_sum() const {
    double sum = 0.0;
    for (NodeId id : kept_ids_) sum += tree_->node(id).cum_score;
    return sum;
  }

 private:
  bool is_ancestor_closed() const {
    for (NodeId id : kept_ids_) {
      const TreeNode& v = tree_->node(id);
      if (!v.is_root() && !kept_[v.parent]) return false;
    }
    return true;
  }

  std::shared_ptr<const DraftTree> tree_;
  std::vector<NodeId> kept_ids_;
  std::vector<bool> kept_;
};

/// Keeps the `k` highest-scoring nodes. Scores never increase from parent to
/// child and ties go to the earlier order key, so the result is a valid
/// subtree as-is.
inline TreePrefix prune_topk(std::shared_ptr<const DraftTree> tree,
                             std::size_t k) {
  if (!tree) throw InvalidInput("prune_topk: null tree");
  if (k < 1 || k > tree->size()) {
    throw InvalidInput("prune_topk: k must lie in [1, " +
                       std::to_string(tree->size()) + "]");
  }
  auto ids = prefix_sequence(*tree);
  ids.resize(k);
  std::vector<bool> kept(tree->size(), false);
  for (NodeId id : ids) kept[id] = true;
  for (NodeId id : ids) {
    const TreeNode& v = tree->node(id);
    EVICT_CHECK(v.is_root() || kept[v.parent],
                "top-k prefix is not ancestor-closed");
  }
  return TreePrefix(std::move(tree), std::move(ids));
}

}  // namespace evict
