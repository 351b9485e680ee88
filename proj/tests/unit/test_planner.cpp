// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "flowplan/error.hpp"
#include "flowplan/planner.hpp"
#include "flowplan/trainer.hpp"

namespace flowplan::planner {
namespace {

void zero(nn::Linear& layer) {
  for (Tensor t : {layer.weight, layer.bias})
    for (double& x : t.mutable_data()) x = 0.0;
}

TEST(Planner, ZeroHeadsReproduceAnchorsAndTieToFirstMode) {
  Model model(testing::tiny_config());
  zero(model.planner.trajectory_head().out);
  zero(model.planner.score_head().out);
  const auto& ep = testing::tiny_dataset().front();
  for (std::size_t c = 0; c < sim::kCommandCount; ++c) {
    const auto command = static_cast<sim::Command>(c);
    const auto set = model.planner.decode_trajectories(
        model.planner.encode_scene(features_tensor(ep.observation_features[0])), command);
    ASSERT_EQ(set.size(), 3u);
    for (std::size_t n = 0; n < set.size(); ++n) {
      const sim::Waypoints w = to_waypoints(set.waypoints[n]);
      for (std::size_t k = 0; k < sim::kHorizon; ++k) {
        EXPECT_NEAR(w[k].x, set.anchors[n][k].x, 1e-12);
        EXPECT_NEAR(w[k].y, set.anchors[n][k].y, 1e-12);
      }
    }
    EXPECT_EQ(select_output_index(set), 0u);
  }
}

TEST(Planner, ArgmaxPrefersLowestIndexOnTies) {
  const std::vector<double> logits{0.1, 0.7, 0.7, -1.0};
  EXPECT_EQ(argmax_mode(logits), 1u);
  EXPECT_THROW(argmax_mode(std::vector<double>{}), ContractError);
}

TEST(Planner, StepsRespectSpeedBound) {
  RunConfig cfg = testing::tiny_config();
  cfg.planner.v_max = 4.0;
  Model model(cfg);
  for (double& x : model.planner.trajectory_head().out.bias.mutable_data()) x = 30.0;
  const auto& ep = testing::tiny_dataset().front();
  const auto set = model.planner.decode_trajectories(
      model.planner.encode_scene(features_tensor(ep.observation_features[2])), sim::Command::straight);
  for (const Tensor& wp : set.waypoints) {
    const sim::Waypoints w = to_waypoints(wp);
    sim::Vec2 prev{0, 0};
    for (const auto& p : w) {
      EXPECT_LE(sim::distance(prev, p), 4.0 * sim::kDt + 1e-9);
      prev = p;
    }
  }
}

TEST(Planner, LeftAndRightAnchorsMirror) {
  for (std::size_t modes : {6u, 13u}) {
    const auto left = make_anchors(sim::Command::left, modes), right = make_anchors(sim::Command::right, modes);
    ASSERT_EQ(left.size(), modes);
    for (std::size_t n = 0; n < modes; ++n)
      for (std::size_t k = 0; k < sim::kHorizon; ++k) {
        EXPECT_NEAR(left[n][k].x, right[n][k].x, 1e-12);
        EXPECT_NEAR(left[n][k].y, -right[n][k].y, 1e-12);
      }
  }
  for (const auto& w : make_anchors(sim::Command::straight, 6)) EXPECT_GT(w.back().x, 0.0);
}

TEST(Planner, ShapesAndErrors) {
  Model model(testing::tiny_config());
  const auto scene = model.planner.encode_scene(features_tensor(testing::tiny_dataset()[0].observation_features[0]));
  EXPECT_EQ(scene.queries.shape(), (ad::Shape{2, 8}));
  const auto set = model.planner.decode_trajectories(scene, sim::Command::left);
  EXPECT_EQ(set.logits.shape(), (ad::Shape{1, 3}));
  EXPECT_THROW(model.planner.encode_scene(Tensor::zeros({2, 5})), ShapeError);
  EXPECT_THROW(set.mode(3), BoundsError);
  EXPECT_THROW(to_waypoints(Tensor::zeros({5, 2})), ShapeError);
  PlannerConfig bad;
  bad.modes = 0;
  EXPECT_THROW(bad.validate(), ContractError);
}

TEST(Planner, GoldenSceneEncoding) {
  Model model(testing::tiny_config());
  const auto& ep = testing::tiny_dataset()[3];
  const auto scene = model.planner.encode_scene(features_tensor(ep.observation_features[4]));
  const std::string msg = testing::check_golden("encode_scene", scene.queries);
  EXPECT_TRUE(msg.empty()) << msg;
}

}  // namespace
}  // namespace flowplan::planner
