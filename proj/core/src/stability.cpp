// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/stability.hpp"

#include <algorithm>
#include <cmath>

#include "flowplan/error.hpp"

namespace flowplan::selection {

void SelectionWeights::validate() const {
  if (lambda_rec < 0.0 || lambda_traj < 0.0 || lambda_theta < 0.0) {
    throw ContractError("selection weights must be non-negative");
  }
  if (lambda_rec == 0.0 && lambda_traj == 0.0 && lambda_theta == 0.0) {
    throw ContractError("at least one selection weight must be positive");
  }
}

double stability_score(std::span<const std::vector<double>> velocities) {
  if (velocities.size() < 2) return 0.0;
  std::vector<double> previous;
  double total = 0.0;
  std::size_t terms = 0;
  for (const auto& v : velocities) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;  // direction carries over
    std::vector<double> unit(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) unit[i] = v[i] / norm;
    if (!previous.empty()) {
      if (previous.size() != unit.size()) throw ShapeError("stability_score: velocity sizes differ");
      // arccos(u.v) for unit vectors, without the cancellation near 0 and pi
      double diff = 0.0, sum = 0.0;
      for (std::size_t i = 0; i < unit.size(); ++i) {
        diff += (unit[i] - previous[i]) * (unit[i] - previous[i]);
        sum += (unit[i] + previous[i]) * (unit[i] + previous[i]);
      }
      total += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
      ++terms;
    }
    previous = std::move(unit);
  }
  return terms == 0 ? 0.0 : total / static_cast<double>(terms);
}

double stability_score(const world::VelocitySequence& sequence) {
  std::vector<std::vector<double>> flat;
  for (const auto& v : sequence.velocities) flat.emplace_back(v.data().begin(), v.data().end());
  return stability_score(flat);
}

double mode_criterion(double traj_err, double rec_err, double stability, const SelectionWeights& w) {
  for (double x : {traj_err, rec_err, stability}) {
    if (!std::isfinite(x) || x < 0.0) throw ContractError("mode_criterion inputs must be finite and non-negative");
  }
  return w.lambda_rec * rec_err + w.lambda_traj * traj_err + w.lambda_theta * stability;
}

std::size_t select_best_mode(std::span<const ModeAssessment> assessments) {
  if (assessments.empty()) throw ContractError("select_best_mode on an empty list");
  std::size_t best = 0;
  for (std::size_t n = 1; n < assessments.size(); ++n)
    if (assessments[n].criterion < assessments[best].criterion) best = n;
  return best;
}

double waypoint_l2(const sim::Waypoints& a, const sim::Waypoints& b) {
  double total = 0.0;
  for (std::size_t k = 0; k < sim::kHorizon; ++k) total += sim::distance(a[k], b[k]);
  return total / static_cast<double>(sim::kHorizon);
}

Assessment assess_modes(const planner::TrajectorySet& set, const world::WorldLatent& z_t,
                        const world::WorldLatent& z_next_target, const sim::Waypoints& gt,
                        const world::WorldModel& model, const SelectionWeights& w) {
  w.validate();
  ad::NoGradGuard no_grad;
  Assessment out;
  const world::WorldLatent start{z_t.z.detach(), z_t.timestep};
  const ad::Tensor pooled = model.pool(start);
  for (std::size_t n = 0; n < set.size(); ++n) {
    const ad::Tensor waypoints = set.waypoints[n].detach();
    const auto h = model.fuse_condition(pooled, waypoints);
    world::Rollout rollout = model.integrate_future(start, h);
    ModeAssessment m;
    m.rec_err = ad::mse(rollout.prediction.z, z_next_target.z).item();
    m.traj_err = waypoint_l2(planner::to_waypoints(waypoints), gt);
    m.stability = stability_score(rollout.velocities);
    m.criterion = mode_criterion(m.traj_err, m.rec_err, m.stability, w);
    out.modes.push_back(m);
    out.rollouts.push_back(std::move(rollout));
  }
  out.best = select_best_mode(out.modes);
  return out;
}

nlohmann::json assessment_json(const Assessment& assessment) {
  nlohmann::json modes = nlohmann::json::array();
  for (std::size_t n = 0; n < assessment.modes.size(); ++n) {
    const auto& m = assessment.modes[n];
    modes.push_back({{"mode", n},
                     {"traj_err", m.traj_err},
                     {"rec_err", m.rec_err},
                     {"stability", m.stability},
                     {"criterion", m.criterion}});
  }
  return {{"modes", modes}, {"n_star", assessment.best}};
}

}  // namespace flowplan::selection
