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

// Self-check suite behind the `oracle` CLI subcommand. Each check compares a
// library routine against an independent reference on seeded random input.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "evict/distribution.hpp"
#include "evict/draft_tree.hpp"
#include "evict/drafter.hpp"
#include "evict/estimator.hpp"
#include "evict/harness.hpp"
#include "evict/moe_target.hpp"
#include "evict/policy.hpp"
#include "evict/testing/oracles.hpp"
#include "evict/verifier.hpp"

namespace evict {

struct OracleCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

inline OracleCheck check_closed_form(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 101));
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    const auto rt = testing::random_tree(rng, 1 + rng.below(12));
    const TreePrefix full(rt.tree, prefix_sequence(*rt.tree));
    worst = std::max(worst, std::abs(exact_expected_accept_len(full, rt.target_probs) -
                                     enumerate_accept_oracle(full, rt.target_probs)));
  }
  return {"closed-form accepted length == enumeration", worst <= 1e-9,
          fmt("max |diff| = %.3g over 500 trees", worst)};
}

inline OracleCheck check_pruning(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 102));
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto rt = testing::random_tree(rng, 1 + rng.below(12));
    const auto best = testing::best_subtree_score_sums(*rt.tree);
    for (std::size_t k = 1; k <= rt.tree->size(); ++k) {
      worst = std::max(worst, std::abs(best[k - 1] - prune_topk(rt.tree, k).score_sum()));
    }
  }
  return {"top-k pruning is the best ancestor-closed subtree", worst <= 1e-12,
          fmt("max gap = %.3g over 200 trees", worst)};
}

inline OracleCheck check_monte_carlo(std::uint64_t seed) {
  MoEConfig cfg;
  cfg.vocab_size = 16;
  cfg.seed = seed;
  const MoETarget model(cfg);
  const Drafter drafter(model, 0.6, seed + 1);
  Rng rng(derive_seed(seed, 103));
  double worst_sigma = 0.0;
  for (int t = 0; t < 10; ++t) {
    std::vector<Token> ctx{static_cast<Token>(rng.below(16)),
                           static_cast<Token>(rng.below(16))};
    auto tree = std::make_shared<const DraftTree>(build_tree(drafter, 1, ctx, 2, 3));
    const TreePrefix prefix(tree, prefix_sequence(*tree));
    const auto probs = target_node_probs(*tree, model, 1.0);
    const double exact = enumerate_accept_oracle(prefix, probs);
    const auto mc = mc_accept_oracle(prefix, model, rng, 20000);
    worst_sigma = std::max(worst_sigma, std::abs(mc.mean - exact) / mc.std_error);
  }
  return {"verifier Monte Carlo matches enumeration (3 sigma)", worst_sigma <= 3.0,
          fmt("worst deviation = %.2f sigma over 10 trees", worst_sigma)};
}

inline OracleCheck check_sampling_lossless(std::uint64_t seed) {
  MoEConfig cfg;
  cfg.vocab_size = 6;
  cfg.seed = seed;
  const MoETarget model(cfg);
  const Drafter drafter(model, 0.3, seed + 2);
  Rng rng(derive_seed(seed, 104));
  const std::vector<Token> ctx{2, 5, 1};
  auto tree = std::make_shared<const DraftTree>(build_tree(drafter, 3, ctx, 1, 3));
  const TreePrefix prefix(tree, prefix_sequence(*tree));
  const int trials = 100000;
  std::vector<double> counts(6, 0.0);
  for (int i = 0; i < trials; ++i) {
    counts[verify_sampling(prefix, model, 1.0, rng).committed_tokens[1]] += 1.0;
  }
  const auto root_ctx = tree->context_of(0);
  const double tv = tv_distance(Distribution::normalized(counts),
                                model.target_dist(root_ctx, 1.0));
  return {"first committed token follows the target (TV < 0.01)", tv < 0.01,
          fmt("TV = %.4f over %.0f trials", tv, trials)};
}

inline OracleCheck check_greedy_lossless(std::uint64_t seed) {
  RunConfig cfg;
  cfg.temperature = 0.0;
  cfg.prompts = {10, 8, seed};
  cfg.max_new_tokens = 24;
  cfg.profile_iters = 20;
  cfg.seed = seed;
  const Harness harness(cfg);
  const auto prompts = harness.prompts();
  std::size_t mismatches = 0;
  for (const char* name : {"evict", "fixed:32", "fixed:4", "coverage:0.8",
                           "depthconf:0.1", "autoregressive"}) {
    const auto rep = harness.run_policy(PolicySpec::parse(name));
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      if (rep.outputs[i] != testing::greedy_reference_decode(
                                harness.model(), prompts[i], cfg.max_new_tokens)) {
        ++mismatches;
      }
    }
  }
  return {"temperature-0 output equals greedy decoding for every policy",
          mismatches == 0, fmt("%.0f mismatching runs", static_cast<double>(mismatches))};
}

inline OracleCheck check_argmax(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 105));
  std::size_t mismatches = 0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 1 + rng.below(33);
    AcceptEstimate est;
    CostTable table;
    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += 0.01 + rng.uniform();
      c += 0.01 + rng.uniform() * 3.0;
      est.prefix_sums.push_back(s);
      table.per_k.push_back(c);
    }
    table.ar_cost = 1.0;
    if (select_prefix_evict(est, table).k_star !=
        testing::naive_ratio_argmax(est.prefix_sums, table.per_k)) {
      ++mismatches;
    }
  }
  return {"utility argmax equals a naive loop", mismatches == 0,
          fmt("%.0f mismatches over 10000 pairs", static_cast<double>(mismatches))};
}

}  // namespace detail

inline std::vector<OracleCheck> run_oracle_suite(std::uint64_t seed) {
  return {detail::check_closed_form(seed), detail::check_pruning(seed),
          detail::check_monte_carlo(seed), detail::check_sampling_lossless(seed),
          detail::check_greedy_lossless(seed), detail::check_argmax(seed)};
}

}  // namespace evict
