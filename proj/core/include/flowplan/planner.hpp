// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <vector>

#include "flowplan/nn.hpp"
#include "flowplan/sim.hpp"

namespace flowplan::planner {

using ad::Tensor;

struct PlannerConfig {
  std::size_t modes = 6;      // N
  std::size_t commands = sim::kCommandCount;  // N_m
  std::size_t queries = 4;    // n_q
  std::size_t dim = 32;       // D
  std::size_t depth = 1;      // decoder layers
  double v_max = 20.0;        // m/s, bounds each waypoint step

  void validate() const;
};

/// Q_scene after cross-attending to the views; n_q × D.
struct SceneQueries {
  Tensor queries;
};

struct TrajectoryMode {
  Tensor waypoints;  // H × 2, ego frame
  double score_logit = 0.0;
};

struct TrajectorySet {
  std::vector<Tensor> waypoints;  // N tensors, H × 2 each
  Tensor logits;                  // 1 × N
  sim::Command command = sim::Command::straight;
  std::vector<sim::Waypoints> anchors;

  std::size_t size() const { return waypoints.size(); }
  TrajectoryMode mode(std::size_t n) const;
};

/// Per-command analytic anchor templates: straight, gentle and hard turns
/// either way, and a stop profile, biased toward the commanded direction.
std::vector<sim::Waypoints> make_anchors(sim::Command command, std::size_t modes);

/// V×d_obs feature matrix for one tick.
Tensor features_tensor(const sim::ViewFeatures& features);
Tensor waypoints_tensor(const sim::Waypoints& waypoints);
sim::Waypoints to_waypoints(const Tensor& waypoints);

/// Index of the largest logit; ties resolve to the lowest index.
std::size_t argmax_mode(std::span<const double> logits);
/// Inference output: argmax-logit mode. Pure function of the set.
TrajectoryMode select_output(const TrajectorySet& set);
std::size_t select_output_index(const TrajectorySet& set);

class Planner {
 public:
  Planner(nn::ParameterSet& params, const PlannerConfig& config, Rng& rng);

  SceneQueries encode_scene(const Tensor& features) const;
  TrajectorySet decode_trajectories(const SceneQueries& scene, sim::Command command) const;

  const PlannerConfig& config() const { return config_; }
  const std::vector<sim::Waypoints>& anchors(sim::Command command) const;
  nlohmann::json anchors_json() const;

  // Exposed for tests that zero individual heads.
  nn::Linear& view_projection() { return view_projection_; }
  nn::AttentionBlock& scene_block() { return scene_block_; }
  nn::Mlp& trajectory_head() { return trajectory_head_; }
  nn::Mlp& score_head() { return score_head_; }
  Tensor scene_query_init() const { return scene_queries_; }

 private:
  PlannerConfig config_;
  Tensor scene_queries_;
  nn::Linear view_projection_;
  nn::AttentionBlock scene_block_;
  std::vector<Tensor> trajectory_queries_;  // per command, N × D
  std::vector<nn::AttentionBlock> decoder_;
  nn::Mlp trajectory_head_;
  nn::Mlp score_head_;
  std::vector<std::vector<sim::Waypoints>> anchors_;
};

}  // namespace flowplan::planner
