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

#include "evict/cost_model.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <vector>

#include "gtest/gtest.h"

#include "evict/testing/oracles.hpp"

namespace evict {
namespace {

ExpertActivation activation_of(std::size_t total) {
  ExpertActivation a;
  a.union_size_total = total;
  return a;
}

CostTable profile(const CostParams& params, std::size_t iters,
                  std::uint64_t seed = 3, double alpha = 0.6) {
  const MoETarget model(MoEConfig{});
  const Drafter drafter(model, alpha, 7);
  Rng rng(seed);
  return profile_costs(model, drafter, params, TreeParams{}, iters, rng);
}

TEST(SimulateVerifyCost, Examples) {
  EXPECT_EQ(simulate_verify_cost({1, 0, 0, 0}, 1, activation_of(16), 4), 1.0);
  EXPECT_EQ(simulate_verify_cost({1, 0, 0, 0}, 33, activation_of(90), 4), 1.0);
  EXPECT_EQ(simulate_verify_cost({0, 0, 1, 0}, 1, activation_of(16), 0), 16.0);
  EXPECT_EQ(simulate_verify_cost({2, 0.5, 1.0, 0.25}, 3, activation_of(10), 4), 14.5);
  EXPECT_THROW(simulate_verify_cost({}, 0, activation_of(16), 4), InvalidInput);
}

TEST(SimulateVerifyCost, SingleNodeUnionIsLayersTimesActive) {
  const MoETarget model(MoEConfig{});
  const std::vector<std::vector<Token>> one{{4, 2}};
  const auto act = expert_union(model, one);
  EXPECT_EQ(simulate_verify_cost({0, 0, 1, 0}, 1, act, 0), 16.0);
}

TEST(SimulateVerifyCost, NonDecreasingAsNodesAreAdded) {
  const MoETarget model(MoEConfig{});
  const Drafter drafter(model, 0.5, 7);
  const CostParams params;
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<Token> ctx(4);
    for (Token& tok : ctx) tok = static_cast<Token>(rng.below(64));
    const auto tree = build_tree(drafter, static_cast<Token>(rng.below(64)), ctx, 3, 4);
    ExpertUnionBuilder builder(model);
    double prev = 0.0;
    const auto order = prefix_sequence(tree);
    for (std::size_t k = 1; k <= order.size(); ++k) {
      builder.add(tree.context_of(order[k - 1]));
      const double c = simulate_verify_cost(params, k, builder.activation(), 3);
      ASSERT_GE(c, prev);
      prev = c;
    }
  }
}

TEST(CostParams, Validation) {
  EXPECT_NO_THROW(CostParams::expert_dominated().validate());
  EXPECT_NO_THROW(CostParams::dense().validate());
  EXPECT_THROW((CostParams{0, 0, 0, 0}).validate(), ConfigError);
  EXPECT_THROW((CostParams{-1, 0, 1, 0}).validate(), ConfigError);
  EXPECT_THROW((CostParams{NAN, 0, 1, 0}).validate(), ConfigError);
}

TEST(AutoregressiveCost, OneTokenNoDrafting) {
  const CostParams params{2.0, 0.1, 1.0, 0.5};
  EXPECT_DOUBLE_EQ(autoregressive_cost(params, MoEConfig{}), 2.0 + 0.1 + 16.0);
}

TEST(ProfileCosts, DenseIsExactlyAffine) {
  const CostParams dense = CostParams::dense();
  const auto table = profile(dense, 20);
  ASSERT_EQ(table.size(), 33U);
  for (std::size_t k = 1; k <= table.size(); ++k) {
    EXPECT_NEAR(table.cost(k), dense.c0 + dense.c_draft * 4 + dense.c_tok * k, 1e-12);
  }
}

TEST(ProfileCosts, ExpertDominatedGrowsAndFlattens) {
  const auto table = profile(CostParams{}, 200);
  for (std::size_t k = 2; k <= table.size(); ++k) {
    EXPECT_GT(table.cost(k), table.cost(k - 1));
  }
  // Union growth saturates: the second half adds less than the first.
  const double first = table.cost(17) - table.cost(1);
  const double second = table.cost(33) - table.cost(17);
  EXPECT_LT(second, first);
  EXPECT_GE(table.cost(1), table.ar_cost);
}

TEST(ProfileCosts, SingleIterationWithinTwentyPercent) {
  const auto one = profile(CostParams{}, 1, 11);
  const auto many = profile(CostParams{}, 1000, 11);
  for (std::size_t k = 1; k <= one.size(); ++k) {
    EXPECT_LE(std::abs(one.cost(k) - many.cost(k)), 0.2 * many.cost(k)) << "k=" << k;
  }
}

TEST(ProfileCosts, ReproducibleBitForBit) {
  const auto a = profile(CostParams{}, 50, 99);
  const auto b = profile(CostParams{}, 50, 99);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.meta.seed, 99U);
  EXPECT_EQ(a.meta.num_profile_iters, 50U);
  EXPECT_EQ(a.meta.config_hash.size(), 16U);
  EXPECT_NE(profile(CostParams{}, 50, 100), a);
}

TEST(ProfileCosts, ConfigHashTracksInputs) {
  const MoETarget model(MoEConfig{});
  const Drafter drafter(model, 0.6, 7), other(model, 0.7, 7);
  const auto h = profile_config_hash(model.config(), drafter, {}, {});
  EXPECT_EQ(h, profile_config_hash(model.config(), drafter, {}, {}));
  EXPECT_NE(h, profile_config_hash(model.config(), other, {}, {}));
  EXPECT_NE(h, profile_config_hash(model.config(), drafter, CostParams::dense(), {}));
  EXPECT_NE(h, profile_config_hash(model.config(), drafter, {}, TreeParams{3, 8, 32}));
}

TEST(CostTable, JsonRoundTrip) {
  const auto table = profile(CostParams{}, 10);
  EXPECT_EQ(cost_table_from_json(to_json(table)), table);
  const auto j = to_json(table);
  EXPECT_TRUE(j.contains("per_k"));
  EXPECT_TRUE(j.contains("ar_cost"));
  EXPECT_TRUE(j["meta"].contains("config_hash"));

  const auto path = std::filesystem::temp_directory_path() / "evict_cost_table_test.json";
  save_cost_table(table, path.string());
  EXPECT_EQ(load_cost_table(path.string()), table);
  std::filesystem::remove(path);
}

TEST(CostTable, RejectsBadDocuments) {
  using nlohmann::json;
  EXPECT_THROW(cost_table_from_json(json{{"ar_cost", 1.0}}), ConfigError);
  EXPECT_THROW(cost_table_from_json(json{{"per_k", {1.0, 2.0}}}), ConfigError);
  EXPECT_THROW(cost_table_from_json(json{{"per_k", {2.0, 1.0}}, {"ar_cost", 1.0}}),
               ConfigError);
  EXPECT_THROW(cost_table_from_json(json{{"per_k", json::array()}, {"ar_cost", 1.0}}),
               ConfigError);
  EXPECT_THROW(cost_table_from_json(json{{"per_k", {1.0, 0.0}}, {"ar_cost", 1.0}}),
               ConfigError);
  EXPECT_THROW(cost_table_from_json(json{{"per_k", "x"}, {"ar_cost", 1.0}}), ConfigError);

  EXPECT_THROW(load_cost_table("/nonexistent/dir/table.json"), IoError);
  const auto path = std::filesystem::temp_directory_path() / "evict_bad_table.json";
  std::ofstream(path) << "{not json";
  EXPECT_THROW(load_cost_table(path.string()), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(save_cost_table(CostTable{}, "/nonexistent/dir/table.json"), IoError);
}

}  // namespace
}  // namespace evict
