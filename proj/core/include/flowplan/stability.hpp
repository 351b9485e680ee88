// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <span>
#include <vector>

#include "flowplan/planner.hpp"
#include "flowplan/world_model.hpp"

namespace flowplan::selection {

struct SelectionWeights {
  double lambda_rec = 1.0;
  double lambda_traj = 1.0;
  double lambda_theta = 0.5;

  void validate() const;
};

struct ModeAssessment {
  double traj_err = 0.0;   // mean waypoint L2 to ground truth, meters
  double rec_err = 0.0;    // MSE of the rolled-out latent vs target
  double stability = 0.0;  // mean angle between consecutive velocities, [0, pi]
  double criterion = 0.0;
};

/// Mean angle between consecutive flattened velocity directions. Fewer than
/// two velocities score 0. A zero-norm velocity keeps the previous direction;
/// a leading zero-norm velocity contributes no angle term.
double stability_score(std::span<const std::vector<double>> velocities);
double stability_score(const world::VelocitySequence& sequence);

/// λ_rec·rec + λ_traj·traj + λ_θ·stability. Negative inputs throw ContractError.
double mode_criterion(double traj_err, double rec_err, double stability, const SelectionWeights& w);

/// Argmin of the criteria; ties resolve to the lowest index.
std::size_t select_best_mode(std::span<const ModeAssessment> assessments);

/// Mean Euclidean distance between matching waypoints.
double waypoint_l2(const sim::Waypoints& a, const sim::Waypoints& b);

struct Assessment {
  std::vector<ModeAssessment> modes;
  std::size_t best = 0;
  std::vector<world::Rollout> rollouts;  // kept for the n* reconstruction loss
};

/// Rolls every mode through the world model and scores it against ground
/// truth. Runs without recording a graph.
Assessment assess_modes(const planner::TrajectorySet& set, const world::WorldLatent& z_t,
                        const world::WorldLatent& z_next_target, const sim::Waypoints& gt,
                        const world::WorldModel& model, const SelectionWeights& w);

nlohmann::json assessment_json(const Assessment& assessment);

}  // namespace flowplan::selection
