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

// Debug renderings of a draft tree.

#include <cstdio>
#include <string>

#include "json.hpp"

#include "evict/draft_tree.hpp"

namespace evict {

// One line per node, indented two spaces per depth, children in order_key
// order.
inline std::string tree_to_text(const DraftTree& tree) {
  std::string out;
  auto emit = [&](auto&& self, NodeId id) -> void {
    const TreeNode& v = tree.node(id);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%*s#%zu token=%u q=%.6f score=%.6f\n",
                  static_cast<int>(2 * v.depth), "", v.id,
                  static_cast<unsigned>(v.token), v.q_prob, v.cum_score);
    out += buf;
    for (NodeId c : tree.children(id)) self(self, c);
  };
  emit(emit, 0);
  return out;
}

inline nlohmann::json tree_to_json(const DraftTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const TreeNode& v : tree.nodes()) {
    nodes.push_back({{"id", v.id},
                     {"parent", v.is_root() ? nlohmann::json(nullptr)
                                            : nlohmann::json(v.parent)},
                     {"token", v.token},
                     {"q_prob", v.q_prob},
                     {"cum_score", v.cum_score}});
  }
  return nlohmann::json{{"root_context", tree.root_context()},
                        {"nodes", std::move(nodes)}};
}

}  // namespace evict
