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

// Synthetic sparse Mixture-of-Experts target model.
//
// The model never runs a transformer. A context is embedded by averaging
// per-(layer, token) pseudo-random unit vectors over its last
// `context_order` tokens and renormalizing; each layer routes that hidden state to its top
// experts, and the next-token logits are the router-weighted sum of the
// selected experts' logit tables accumulated over all layers. Everything is
// regenerated from the seed, so probability queries are exact and cheap.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evict/distribution.hpp"
#include "evict/errors.hpp"

namespace evict {

struct MoEConfig {
  std::size_t vocab_size = 64;
  std::size_t num_layers = 4;
  std::size_t num_experts = 32;
  std::size_t active_experts = 4;
  std::size_t hidden_dim = 32;
  std::size_t context_order = 4;
  std::uint64_t seed = 0;
  // Standard deviation of the expert logit tables. Controls how peaked the
  // target's next-token distributions are.
  double logit_scale = 3.0;

  void validate() const {
    if (vocab_size == 0 || num_layers == 0 || num_experts == 0 ||
        active_experts == 0 || hidden_dim == 0 || context_order == 0) {
      throw ConfigError("MoEConfig: all dimensions must be >= 1");
    }
    if (active_experts > num_experts) {
      throw ConfigError("MoEConfig: active_experts exceeds num_experts");
    }
    if (!std::isfinite(logit_scale) || logit_scale < 0.0) {
      throw ConfigError("MoEConfig: logit_scale must be finite and >= 0");
    }
  }

  friend bool operator==(const MoEConfig&, const MoEConfig&) = default;
};

using ExpertSet = std::vector<std::size_t>;  // sorted ascending

// Experts activated by a set of verified positions, one set per MoE layer.
struct ExpertActivation {
  std::vector<ExpertSet> per_layer;
  std::size_t union_size_total = 0;

  friend bool operator==(const ExpertActivation&,
                         const ExpertActivation&) = default;
};

class MoETarget {
 public:
  explicit MoETarget(MoEConfig config) : config_(config) {
    config_.validate();
    const std::size_t L = config_.num_layers;
    const std::size_t N = config_.num_experts;
    const std::size_t d = config_.hidden_dim;
    const std::size_t V = config_.vocab_size;

    Rng router_rng(derive_seed(config_.seed, 1));
    router_.resize(L * N * d);
    for (double& w : router_) w = router_rng.normal();

    Rng table_rng(derive_seed(config_.seed, 2));
    expert_tables_.resize(L * N * V);
    for (double& x : expert_tables_) x = config_.logit_scale * table_rng.normal();

    // Layer-salted token embeddings, each a unit vector. They carry no
    // position, so neighbouring tree nodes share most of their window and
    // route to overlapping experts.
    Rng embed_rng(derive_seed(config_.seed, 3));
    token_vectors_.resize(L * V * d);
    for (std::size_t base = 0; base < token_vectors_.size(); base += d) {
      double norm2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double x = embed_rng.normal();
        token_vectors_[base + j] = x;
        norm2 += x * x;
      }
      const double inv = 1.0 / std::sqrt(norm2);
      for (std::size_t j = 0; j < d; ++j) token_vectors_[base + j] *= inv;
    }
  }

  // Same model with the gate matrices replaced (L x N x d, row-major).
  MoETarget(MoEConfig config, std::vector<double> router_weights)
      : MoETarget(config) {
    if (router_weights.size() != router_.size()) {
      throw InvalidInput("MoETarget: router weights must have L * N * d entries");
    }
    router_ = std::move(router_weights);
  }

  const MoEConfig& config() const noexcept { return config_; }
  std::size_t vocab_size() const noexcept { return config_.vocab_size; }
  std::size_t num_layers() const noexcept { return config_.num_layers; }

  // Row-major N x d gate matrix of one layer.
  std::span<const double> router_weights(std::size_t layer) const {
    check_layer(layer);
    const std::size_t stride = config_.num_experts * config_.hidden_dim;
    return {router_.data() + layer * stride, stride};
  }

  std::span<const double> expert_table(std::size_t layer,
                                       std::size_t expert) const {
    check_layer(layer);
    if (expert >= config_.num_experts) {
      throw InvalidInput("expert_table: expert out of range");
    }
    const std::size_t V = config_.vocab_size;
    return {expert_tables_.data() + (layer * config_.num_experts + expert) * V,
            V};
  }

  // Unit-norm hidden state of `layer` for the last `context_order` tokens.
  std::vector<double> hidden_state(std::size_t layer,
                                   std::span<const Token> context) const {
    check_layer(layer);
    if (context.empty()) throw InvalidInput("hidden_state: empty context");
    const std::size_t d = config_.hidden_dim;
    const std::size_t V = config_.vocab_size;
    const std::size_t window = std::min(context.size(), config_.context_order);
    std::vector<double> h(d, 0.0);
    for (std::size_t back = 0; back < window; ++back) {
      const Token tok = context[context.size() - 1 - back];
      if (tok >= V) throw InvalidInput("hidden_state: token out of vocabulary");
      const double* v = token_vectors_.data() + (layer * V + tok) * d;
      for (std::size_t j = 0; j < d; ++j) h[j] += v[j];
    }
    double norm2 = 0.0;
    for (double x : h) norm2 += x * x;
    if (norm2 == 0.0) {
      h[0] = 1.0;
      return h;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : h) x *= inv;
    return h;
  }

  // Top `active_experts` of W_g h, ties to the lower expert index. Returns
  // (expert, score) pairs in selection order.
  std::vector<std::pair<std::size_t, double>> route_scored(
      std::size_t layer, std::span<const double> h) const {
    check_layer(layer);
    const std::size_t N = config_.num_experts;
    const std::size_t d = config_.hidden_dim;
    if (h.size() != d) throw InvalidInput("route: hidden dimension mismatch");
    const auto W = router_weights(layer);
    std::vector<std::pair<std::size_t, double>> scored(N);
    for (std::size_t e = 0; e < N; ++e) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += W[e * d + j] * h[j];
      scored[e] = {e, s};
    }
    const auto k = static_cast<std::ptrdiff_t>(config_.active_experts);
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end(),
                      [](const auto& a, const auto& b) {
                        return a.second > b.second ||
                               (a.second == b.second && a.first < b.first);
                      });
    scored.resize(config_.active_experts);
    return scored;
  }

  ExpertSet route(std::size_t layer, std::span<const double> h) const {
    ExpertSet experts;
    for (const auto& [e, score] : route_scored(layer, h)) experts.push_back(e);
    std::sort(experts.begin(), experts.end());
    return experts;
  }

  ExpertSet route_context(std::size_t layer,
                          std::span<const Token> context) const {
    return route(layer, hidden_state(layer, context));
  }

  // Next-token distribution after `context`.
  Distribution target_dist(std::span<const Token> context,
                           double temperature) const {
    return softmax_temp(target_logits(context), temperature);
  }

  std::vector<double> target_logits(std::span<const Token> context) const {
    const std::size_t V = config_.vocab_size;
    std::vector<double> logits(V, 0.0);
    std::vector<double> weights;
    for (std::size_t layer = 0; layer < config_.num_layers; ++layer) {
      const auto h = hidden_state(layer, context);
      const auto selected = route_scored(layer, h);
      // Softmax over the selected router scores.
      weights.assign(selected.size(), 0.0);
      const double top = selected.front().second;
      double sum = 0.0;
      for (std::size_t i = 0; i < selected.size(); ++i) {
        weights[i] = std::exp(selected[i].second - top);
        sum += weights[i];
      }
      for (std::size_t i = 0; i < selected.size(); ++i) {
        const auto table = expert_table(layer, selected[i].first);
        const double w = weights[i] / sum;
        for (std::size_t t = 0; t < V; ++t) logits[t] += w * table[t];
      }
    }
    return logits;
  }

 private:
  void check_layer(std::size_t layer) const {
    if (layer >= config_.num_layers) {
      throw InvalidInput("MoETarget: layer out of range");
    }
  }

  MoEConfig config_;
  std::vector<double> router_;         // L x N x d
  std::vector<double> expert_tables_;  // L x N x V
  std::vector<double> token_vectors_;  // L x V x d
};

/// Accumulates per-layer expert unions one verified position at a time.
class ExpertUnionBuilder {
 public:
  explicit ExpertUnionBuilder(const MoETarget& model)
      : model_(&model),
        marks_(model.config().num_layers,
               std::vector<bool>(model.config().num_experts, false)) {}

  // Routes `context` through every layer and returns the new union total.
  std::size_t add(std::span<const Token> context) {
    for (std::size_t layer = 0; layer < marks_.size(); ++layer) {
      for (std::size_t e : model_->route_context(layer, context)) {
        if (!marks_[layer][e]) {
          marks_[layer][e] = true;
          ++total_;
        }
      }
    }
    ++positions_;
    return total_;
  }

  std::size_t union_size_total() const noexcept { return total_; }
  std::size_t positions() const noexcept { return positions_; }

  ExpertActivation activation() const {
    ExpertActivation out;
    out.per_layer.resize(marks_.size());
    for (std::size_t layer = 0; layer < marks_.size(); ++layer) {
      for (std::size_t e = 0; e < marks_[layer].size(); ++e) {
        if (marks_[layer][e]) out.per_layer[layer].push_back(e);
      }
    }
    out.union_size_total = total_;
    return out;
  }

 private:
  const MoETarget* model_;
  std::vector<std::vector<bool>> marks_;
  std::size_t total_ = 0;
  std::size_t positions_ = 0;
};

inline ExpertActivation expert_union(
    const MoETarget& model, std::span<const std::vector<Token>> contexts) {
  if (contexts.empty()) throw InvalidInput("expert_union: no contexts");
  ExpertUnionBuilder builder(model);
  for (const auto& ctx : contexts) builder.add(ctx);
  return builder.activation();
}

}  // namespace evict
