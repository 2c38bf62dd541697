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

#include "evict/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "gtest/gtest.h"

#include "evict/testing/oracles.hpp"

namespace evict {
namespace {

TreeNode make_node(NodeId id, NodeId parent, double q, double cum,
                   std::size_t depth) {
  return TreeNode{id, parent, static_cast<Token>(id), q, cum, depth, id};
}

std::shared_ptr<const DraftTree> chain_tree() {
  return std::make_shared<const DraftTree>(DraftTree::from_nodes(
      {}, {make_node(0, kNoParent, 1.0, 1.0, 0), make_node(1, 0, 0.5, 0.5, 1),
           make_node(2, 1, 0.5, 0.25, 2)}));
}

std::shared_ptr<const DraftTree> two_children_tree() {
  return std::make_shared<const DraftTree>(DraftTree::from_nodes(
      {}, {make_node(0, kNoParent, 1.0, 1.0, 0), make_node(1, 0, 0.6, 0.6, 1),
           make_node(2, 0, 0.4, 0.4, 1)}));
}

TreePrefix whole(const std::shared_ptr<const DraftTree>& tree) {
  return TreePrefix(tree, prefix_sequence(*tree));
}

// Small model so Monte Carlo runs stay cheap.
MoEConfig small_config(std::uint64_t seed) {
  MoEConfig cfg;
  cfg.vocab_size = 16;
  cfg.num_experts = 8;
  cfg.active_experts = 2;
  cfg.hidden_dim = 8;
  cfg.seed = seed;
  return cfg;
}

TEST(PrefixSums, Examples) {
  EXPECT_EQ(estimated_accept_prefix_sums(*chain_tree()).prefix_sums,
            (std::vector<double>{1.0, 1.5, 1.75}));
  const auto root_only = std::make_shared<const DraftTree>(
      DraftTree::from_nodes({}, {make_node(0, kNoParent, 1.0, 1.0, 0)}));
  EXPECT_EQ(estimated_accept_prefix_sums(*root_only).prefix_sums,
            (std::vector<double>{1.0}));
  const auto capped = estimated_accept_prefix_sums(*chain_tree(), 2);
  EXPECT_EQ(capped.size(), 2U);
  EXPECT_EQ(capped.at(2), 1.5);
  EXPECT_THROW(capped.at(3), InvalidInput);
  EXPECT_THROW(capped.at(0), InvalidInput);
}

TEST(PrefixSums, StrictlyIncreasingFromOne) {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    const auto rt = testing::random_tree(rng, 1 + rng.below(40));
    const auto est = estimated_accept_prefix_sums(*rt.tree);
    ASSERT_EQ(est.size(), rt.tree->size());
    ASSERT_EQ(est.at(1), 1.0);
    for (std::size_t k = 2; k <= est.size(); ++k) ASSERT_GT(est.at(k), est.at(k - 1));
    double total = 0.0;
    for (const TreeNode& v : rt.tree->nodes()) total += v.cum_score;
    ASSERT_NEAR(est.at(est.size()), total, 1e-12);
  }
}

TEST(ExactAcceptLen, Examples) {
  const auto chain = chain_tree();
  EXPECT_EQ(exact_expected_accept_len(whole(chain), std::vector<double>{1, 1, 1}), 3.0);
  const auto pair = two_children_tree();
  EXPECT_DOUBLE_EQ(
      exact_expected_accept_len(whole(pair), std::vector<double>{1.0, 0.3, 0.5}), 1.8);
  EXPECT_DOUBLE_EQ(
      exact_expected_accept_len(TreePrefix(chain, {0, 1}),
                                std::vector<double>{1.0, 0.4, 0.9}),
      1.4);
}

TEST(ExactAcceptLen, RejectsBadProbabilities) {
  const auto pair = two_children_tree();
  EXPECT_THROW(exact_expected_accept_len(whole(pair), std::vector<double>{1.0, 1.2, 0.1}),
               InvalidInput);
  EXPECT_THROW(exact_expected_accept_len(whole(pair), std::vector<double>{1.0, -0.1, 0.1}),
               InvalidInput);
  EXPECT_THROW(exact_expected_accept_len(whole(pair), std::vector<double>{1.0, 0.1}),
               InvalidInput);
}

TEST(Enumeration, Examples) {
  const auto root_only = std::make_shared<const DraftTree>(
      DraftTree::from_nodes({}, {make_node(0, kNoParent, 1.0, 1.0, 0)}));
  EXPECT_EQ(enumerate_accept_oracle(whole(root_only), std::vector<double>{1.0}), 1.0);
  const auto chain = chain_tree();
  EXPECT_DOUBLE_EQ(enumerate_accept_oracle(TreePrefix(chain, {0, 1}),
                                           std::vector<double>{1.0, 0.3, 0.7}),
                   1.3);
  const auto pair = two_children_tree();
  const std::vector<double> probs{1.0, 0.3, 0.5};
  EXPECT_NEAR(enumerate_accept_oracle(whole(pair), probs), 1.8, 1e-15);
  const std::vector<std::size_t> reversed{0, 1, 0};
  EXPECT_NEAR(enumerate_accept_oracle(whole(pair), probs, reversed), 1.8, 1e-15);
}

TEST(Enumeration, Guards) {
  Rng rng(2);
  const auto big = testing::random_tree(rng, kEnumerationNodeLimit + 1);
  EXPECT_THROW(enumerate_accept_oracle(whole(big.tree), big.target_probs), ConfigError);
  const auto pair = two_children_tree();
  EXPECT_THROW(enumerate_accept_oracle(whole(pair), std::vector<double>{1.0, 0.6, 0.5}),
               InvalidInput);
}

TEST(Enumeration, MatchesClosedFormOnRandomTrees) {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    const auto rt = testing::random_tree(rng, 1 + rng.below(kEnumerationNodeLimit));
    for (std::size_t k : {std::size_t{1}, rt.tree->size() / 2 + 1, rt.tree->size()}) {
      const auto prefix = prune_topk(rt.tree, k);
      ASSERT_NEAR(exact_expected_accept_len(prefix, rt.target_probs),
                  enumerate_accept_oracle(prefix, rt.target_probs), 1e-9);
    }
  }
}

TEST(Enumeration, SiblingOrderInvariance) {
  Rng rng(4);
  for (int t = 0; t < 300; ++t) {
    const auto rt = testing::random_tree(rng, 2 + rng.below(14));
    const auto prefix = whole(rt.tree);
    std::vector<std::size_t> rank(rt.tree->size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    for (std::size_t i = rank.size(); i > 1; --i) std::swap(rank[i - 1], rank[rng.below(i)]);
    ASSERT_NEAR(enumerate_accept_oracle(prefix, rt.target_probs, rank),
                enumerate_accept_oracle(prefix, rt.target_probs), 1e-9);
  }
}

TEST(MonteCarlo, Examples) {
  const MoETarget model(small_config(5));
  const Drafter drafter(model, 1.0, 0);
  Rng rng(5);
  const std::vector<Token> ctx{1, 2, 3};
  const auto root_token = static_cast<Token>(model.target_dist(ctx, 0.0).argmax());
  // topk = 1 under a perfect drafter follows the target argmax chain.
  const auto chain = std::make_shared<const DraftTree>(
      build_tree(drafter, root_token, ctx, 5, 1));
  const auto greedy = mc_accept_oracle(whole(chain), model, rng, 100, 0.0);
  EXPECT_EQ(greedy.mean, 6.0);
  EXPECT_EQ(greedy.std_error, 0.0);
  const auto root_only = mc_accept_oracle(prune_topk(chain, 1), model, rng, 1000);
  EXPECT_EQ(root_only.mean, 1.0);
  EXPECT_THROW(mc_accept_oracle(whole(chain), model, rng, 0), InvalidInput);
}

TEST(MonteCarlo, AgreesWithEnumerationWithinThreeSigma) {
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    const MoETarget model(small_config(100 + t));
    const Drafter drafter(model, rng.uniform(), t);
    const std::vector<Token> ctx{static_cast<Token>(rng.below(16)),
                                static_cast<Token>(rng.below(16))};
    const auto tree = std::make_shared<const DraftTree>(build_tree(
        drafter, static_cast<Token>(rng.below(16)), ctx, 1 + rng.below(3), 1 + rng.below(3)));
    const auto prefix = prune_topk(tree, 1 + rng.below(tree->size()));
    const auto probs = target_node_probs(*tree, model, 1.0);
    const double exact = enumerate_accept_oracle(prefix, probs);
    const auto mc = mc_accept_oracle(prefix, model, rng, 20000);
    if (mc.std_error == 0.0) {
      // No variation observed; events rarer than 3 / trials may be unseen.
      EXPECT_NEAR(mc.mean, exact, 3.0 / 20000.0);
    } else {
      EXPECT_LE(std::abs(mc.mean - exact), 3.0 * mc.std_error)
          << "tree " << t << ": mc " << mc.mean << " exact " << exact;
    }
  }
}

TEST(Calibration, EstimateEqualsExactForAPerfectDrafter) {
  Rng rng(7);
  const MoETarget model(MoEConfig{});
  const Drafter drafter(model, 1.0, 0);
  for (int t = 0; t < 20; ++t) {
    std::vector<Token> ctx(4);
    for (Token& tok : ctx) tok = static_cast<Token>(rng.below(64));
    const auto tree = std::make_shared<const DraftTree>(
        build_tree(drafter, static_cast<Token>(rng.below(64)), ctx, 4, 8));
    const auto est = estimated_accept_prefix_sums(*tree);
    const auto probs = target_node_probs(*tree, model, 1.0);
    for (std::size_t k = 1; k <= tree->size(); ++k) {
      ASSERT_NEAR(est.at(k), exact_expected_accept_len(prune_topk(tree, k), probs), 1e-9);
    }
  }
}

}  // namespace
}  // namespace evict
