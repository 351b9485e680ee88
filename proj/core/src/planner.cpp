// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/planner.hpp"

#include <cmath>

#include "flowplan/error.hpp"

namespace flowplan::planner {

namespace {

constexpr double kAnchorSpeed = 9.0;
constexpr double kAnchorStopDecel = 3.0;

sim::Waypoints arc_template(double curvature, double speed) {
  sim::Waypoints w{};
  for (std::size_t k = 0; k < sim::kHorizon; ++k) {
    const double s = speed * sim::kDt * static_cast<double>(k + 1);
    if (std::abs(curvature) < 1e-12) {
      w[k] = {s, 0.0};
    } else {
      w[k] = {std::sin(curvature * s) / curvature, (1.0 - std::cos(curvature * s)) / curvature};
    }
  }
  return w;
}

sim::Waypoints stop_template(double speed) {
  sim::Waypoints w{};
  double x = 0.0, v = speed;
  for (std::size_t k = 0; k < sim::kHorizon; ++k) {
    x += v * sim::kDt;
    v = std::max(0.0, v - kAnchorStopDecel * sim::kDt * 2.0);
    w[k] = {x, 0.0};
  }
  return w;
}

}  // namespace

void PlannerConfig::validate() const {
  if (modes < 1) throw ContractError("planner needs at least one mode");
  if (commands != sim::kCommandCount) throw ContractError("planner command count must match the command vocabulary");
  if (queries < 1 || dim < 1 || depth < 1) throw ContractError("planner dimensions must be positive");
  if (!(v_max > 0.0)) throw ContractError("planner v_max must be positive");
}

TrajectoryMode TrajectorySet::mode(std::size_t n) const {
  if (n >= waypoints.size()) throw BoundsError("mode index " + std::to_string(n) + " out of range");
  return {waypoints[n], logits.data()[n]};
}

std::vector<sim::Waypoints> make_anchors(sim::Command command, std::size_t modes) {
  static constexpr double kGentle = 1.0 / 150.0, kMedium = 1.0 / 90.0, kHard = 1.0 / 60.0, kSharp = 1.0 / 40.0;
  std::vector<double> curvatures;
  switch (command) {
    case sim::Command::straight: curvatures = {0.0, kGentle, -kGentle, kHard, -kHard}; break;
    case sim::Command::left: curvatures = {kMedium, kHard, kSharp, kGentle, 0.0}; break;
    case sim::Command::right: curvatures = {-kMedium, -kHard, -kSharp, -kGentle, 0.0}; break;
  }
  std::vector<sim::Waypoints> base;
  for (double k : curvatures) base.push_back(arc_template(k, kAnchorSpeed));
  base.push_back(stop_template(kAnchorSpeed));

  std::vector<sim::Waypoints> out;
  // Beyond the six base templates, cycle through them at alternating speeds.
  static constexpr std::array<double, 2> kSpeedScale{2.0 / 3.0, 4.0 / 3.0};
  for (std::size_t n = 0; n < modes; ++n) {
    if (n < base.size()) {
      out.push_back(base[n]);
      continue;
    }
    const std::size_t round = n / base.size() - 1;
    const double speed = kAnchorSpeed * kSpeedScale[round % 2] * (1.0 + 0.1 * static_cast<double>(round / 2));
    const std::size_t idx = n % base.size();
    out.push_back(idx < curvatures.size() ? arc_template(curvatures[idx], speed) : stop_template(speed));
  }
  return out;
}

Tensor features_tensor(const sim::ViewFeatures& features) {
  std::vector<double> values;
  values.reserve(sim::kViews * sim::kObsDim);
  for (const auto& view : features) values.insert(values.end(), view.begin(), view.end());
  return Tensor::from({sim::kViews, sim::kObsDim}, std::move(values));
}

Tensor waypoints_tensor(const sim::Waypoints& waypoints) {
  std::vector<double> values;
  for (const auto& p : waypoints) {
    values.push_back(p.x);
    values.push_back(p.y);
  }
  return Tensor::from({sim::kHorizon, 2}, std::move(values));
}

sim::Waypoints to_waypoints(const Tensor& waypoints) {
  if (waypoints.rows() != sim::kHorizon || waypoints.cols() != 2) {
    throw ShapeError("waypoints must be " + std::to_string(sim::kHorizon) + "x2, got " + waypoints.shape().str());
  }
  sim::Waypoints w{};
  for (std::size_t k = 0; k < sim::kHorizon; ++k) w[k] = {waypoints.at(k, 0), waypoints.at(k, 1)};
  return w;
}

std::size_t argmax_mode(std::span<const double> logits) {
  if (logits.empty()) throw ContractError("argmax over an empty mode list");
  std::size_t best = 0;
  for (std::size_t n = 1; n < logits.size(); ++n)
    if (logits[n] > logits[best]) best = n;
  return best;
}

std::size_t select_output_index(const TrajectorySet& set) {
  if (set.size() == 0 || !set.logits.defined()) throw ContractError("select_output on an empty trajectory set");
  return argmax_mode(set.logits.data());
}

TrajectoryMode select_output(const TrajectorySet& set) { return set.mode(select_output_index(set)); }

Planner::Planner(nn::ParameterSet& params, const PlannerConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim;
  scene_queries_ = params.add("planner.scene_queries", {config_.queries, d}, rng);
  view_projection_ = nn::Linear(params, "planner.view_proj", sim::kObsDim, d, rng);
  scene_block_ = nn::AttentionBlock(params, "planner.scene", d, d, rng);
  for (std::size_t c = 0; c < config_.commands; ++c) {
    const std::string cmd(sim::to_string(static_cast<sim::Command>(c)));
    trajectory_queries_.push_back(params.add("planner.traj_queries." + cmd, {config_.modes, d}, rng));
  }
  for (std::size_t l = 0; l < config_.depth; ++l) {
    decoder_.emplace_back(params, "planner.decoder" + std::to_string(l), d, d, rng);
  }
  trajectory_head_ = nn::Mlp(params, "planner.traj_head", d, d, 2 * sim::kHorizon, rng);
  score_head_ = nn::Mlp(params, "planner.score_head", d, d, 1, rng);
  for (std::size_t c = 0; c < config_.commands; ++c) {
    anchors_.push_back(make_anchors(static_cast<sim::Command>(c), config_.modes));
  }
}

SceneQueries Planner::encode_scene(const Tensor& features) const {
  if (features.cols() != sim::kObsDim) {
    throw ShapeError("encode_scene: expected feature width " + std::to_string(sim::kObsDim) + ", got " +
                     features.shape().str());
  }
  return {scene_block_(scene_queries_, view_projection_(features))};
}

TrajectorySet Planner::decode_trajectories(const SceneQueries& scene, sim::Command command) const {
  const auto c = static_cast<std::size_t>(command);
  if (c >= config_.commands) throw VocabularyError("decode_trajectories: command outside vocabulary");
  Tensor q = trajectory_queries_[c];
  for (const auto& block : decoder_) q = block(q, scene.queries);

  const std::size_t n_modes = config_.modes;
  std::vector<double> anchor_values;
  for (const auto& w : anchors_[c])
    for (const auto& p : w) {
      anchor_values.push_back(p.x);
      anchor_values.push_back(p.y);
    }
  const Tensor anchors = Tensor::from({n_modes, 2 * sim::kHorizon}, std::move(anchor_values));
  const Tensor refined = ad::add(anchors, trajectory_head_(q));

  TrajectorySet set;
  set.command = command;
  set.anchors = anchors_[c];
  const double max_step = config_.v_max * sim::kDt;
  for (std::size_t n = 0; n < n_modes; ++n) {
    Tensor mode = ad::reshape(ad::slice_rows(refined, n, 1), {sim::kHorizon, 2});
    set.waypoints.push_back(ad::clamp_step_length(mode, max_step));
  }
  set.logits = ad::reshape(score_head_(q), {1, n_modes});
  return set;
}

const std::vector<sim::Waypoints>& Planner::anchors(sim::Command command) const {
  return anchors_.at(static_cast<std::size_t>(command));
}

nlohmann::json Planner::anchors_json() const {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t c = 0; c < anchors_.size(); ++c) {
    nlohmann::json modes = nlohmann::json::array();
    for (const auto& w : anchors_[c]) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : w) pts.push_back({p.x, p.y});
      modes.push_back(pts);
    }
    out[std::string(sim::to_string(static_cast<sim::Command>(c)))] = modes;
  }
  return out;
}

}  // namespace flowplan::planner
