// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "flowplan/checkpoint.hpp"
#include "flowplan/config.hpp"
#include "flowplan/planner.hpp"
#include "flowplan/sim.hpp"
#include "flowplan/stability.hpp"
#include "flowplan/world_model.hpp"

namespace flowplan {

/// Planner plus world model sharing one parameter set. Initialization is a
/// pure function of the run config (seed and dimensions).
class Model {
 public:
  explicit Model(const RunConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  static std::unique_ptr<Model> from_checkpoint(const Checkpoint& checkpoint);

  nn::ParameterSet params;
  planner::Planner planner;
  world::WorldModel world;
  RunConfig config;

 private:
  Model(const RunConfig& config, Rng&& rng);
};

/// Gradient-carrying forward pass for one (episode, tick) pair.
struct SampleForward {
  planner::TrajectorySet set;
  world::WorldLatent z_t;
  world::WorldLatent z_next;  // detached target
  sim::Waypoints gt{};
};

SampleForward forward_sample(const Model& model, const sim::Episode& episode, std::size_t t);

// Loss terms -------------------------------------------------------------

/// traj + λ_score·score + λ_rec·rec + λ_flow·flow. A non-finite component
/// throws TrainingAbort naming it.
ad::Tensor total_loss(const ad::Tensor& traj, const ad::Tensor& score, const ad::Tensor& rec, const ad::Tensor& flow,
                      const LossWeights& w);
/// L1 between mode n*'s waypoints and ground truth, mean over H×2.
ad::Tensor trajectory_loss(const planner::TrajectorySet& set, const ad::Tensor& gt, std::size_t n_star);
/// L1 averaged over every mode (ablation variant).
ad::Tensor trajectory_loss_all_modes(const planner::TrajectorySet& set, const ad::Tensor& gt);
/// Softmax cross-entropy of the mode logits against n*.
ad::Tensor score_loss(const planner::TrajectorySet& set, std::size_t n_star);
/// MSE of the predicted latent against a detached target.
ad::Tensor reconstruction_loss(const world::WorldLatent& prediction, const world::WorldLatent& target);

// Training ---------------------------------------------------------------

struct TrainingSample {
  const sim::Episode* episode = nullptr;
  std::size_t tick = 0;
};

/// Every `stride`-th plannable tick of every episode, in episode order.
std::vector<TrainingSample> enumerate_samples(const std::vector<const sim::Episode*>& episodes, std::size_t stride);

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double traj = 0.0;
  double score = 0.0;
  double rec = 0.0;
  double flow = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

struct TrainOptions {
  /// When set, checkpoint.json and metrics.jsonl are written here after each epoch.
  std::string out_dir;
  /// Per-batch selection dump, one JSON object per line.
  std::ostream* selection_dump = nullptr;
  std::function<void(const StepRecord&)> on_step;
  std::ostream* progress = nullptr;
};

struct TrainResult {
  std::unique_ptr<Model> model;
  Checkpoint checkpoint;
  std::vector<nlohmann::json> epochs;  // one record per epoch
  nlohmann::json final_metrics;
};

/// Fraction of samples whose argmax score matches n* under the current weights.
double score_agreement(const Model& model, const std::vector<TrainingSample>& samples);

/// Trains on the train split of `dataset`, measuring score agreement on the
/// validation split. Fully determined by `config` and the dataset.
TrainResult train(const RunConfig& config, const std::vector<sim::Episode>& dataset, const TrainOptions& options = {});

}  // namespace flowplan
