// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "flowplan/error.hpp"
#include "flowplan/hash.hpp"
#include "flowplan/rng.hpp"

namespace flowplan::sim {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kLookahead = 12;   // extra obstacle ticks the expert may look at
constexpr double kExpertMargin = 0.8;    // meters of clearance the expert keeps
constexpr double kPlanningBrake = 6.0;   // m/s^2 assumed when checking a candidate
constexpr std::array<double, 7> kAccelCandidates{1.5, 0.0, -1.0, -2.5, -4.0, -6.0, -8.0};

// Observation layout per view.
constexpr std::size_t kEgoTerms = 9;
constexpr std::size_t kRbfCount = 9;
constexpr std::size_t kStateDim = kEgoTerms + 2 * kRbfCount;
constexpr double kRbfSigma = 3.0;
constexpr std::array<double, 3> kRbfX{3.0, 10.0, 20.0};
constexpr std::array<double, 3> kRbfY{-3.0, 0.0, 3.0};
constexpr std::uint64_t kProjectionSeed = 0x0b5e7a710f5eedULL;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Projection {
  std::array<std::array<double, kObsDim * kStateDim>, kViews> weight{};
  std::array<std::array<double, kObsDim>, kViews> bias{};
};

const Projection& projection() {
  static const Projection p = [] {
    Projection out;
    Rng rng(kProjectionSeed);
    const double w_scale = 1.2 / std::sqrt(static_cast<double>(kStateDim));
    for (std::size_t v = 0; v < kViews; ++v) {
      for (double& w : out.weight[v]) w = w_scale * rng.normal();
      for (double& b : out.bias[v]) b = 0.3 * rng.normal();
    }
    return out;
  }();
  return p;
}

double view_gate(std::size_t view, double x) {
  const double front = sigmoid(x / 2.0);
  return view == 0 ? front : 1.0 - front;
}

void add_rbf(std::size_t view, const std::vector<Vec2>& points, double* out) {
  const double sign = view == 0 ? 1.0 : -1.0;
  for (const Vec2& p : points) {
    const double gate = view_gate(view, p.x);
    std::size_t c = 0;
    for (double cx : kRbfX) {
      for (double cy : kRbfY) {
        const double dx = p.x - sign * cx, dy = p.y - cy;
        out[c++] += gate * std::exp(-(dx * dx + dy * dy) / (2.0 * kRbfSigma * kRbfSigma));
      }
    }
  }
}

std::array<double, kStateDim> state_vector(const WorldSnapshot& s, std::size_t view) {
  std::array<double, kStateDim> x{};
  x[0] = s.speed / 10.0;
  x[1] = s.lane_offset / s.half_width;
  x[2] = s.heading_error;
  for (std::size_t i = 0; i < 3; ++i) x[3 + i] = 50.0 * s.curvature_ahead[i];
  x[6 + static_cast<std::size_t>(s.command)] = 1.0;
  add_rbf(view, s.obstacles_now, x.data() + kEgoTerms);
  add_rbf(view, s.obstacles_prev, x.data() + kEgoTerms + kRbfCount);
  return x;
}

LanePose advance(const LanePose& start, double curvature, double length) {
  LanePose out;
  const double h0 = start.heading;
  if (std::abs(curvature) < 1e-12) {
    out.position = {start.position.x + length * std::cos(h0), start.position.y + length * std::sin(h0)};
    out.heading = h0;
  } else {
    const double h1 = h0 + curvature * length;
    out.position = {start.position.x + (std::sin(h1) - std::sin(h0)) / curvature,
                    start.position.y + (std::cos(h0) - std::cos(h1)) / curvature};
    out.heading = h1;
  }
  return out;
}

Obstacle make_vehicle(const Lane& lane, double ego_s, std::size_t n_ticks, bool braking, double start_gap,
                      double speed, double brake_decel, std::size_t brake_tick) {
  Obstacle o;
  o.kind = ObstacleKind::vehicle;
  o.radius = 1.5;
  double s = ego_s + start_gap;
  double v = speed;
  for (std::size_t t = 0; t < n_ticks; ++t) {
    o.trajectory.push_back(lane.pose_at(s).position);
    s += v * kDt;
    if (braking && t + 1 >= brake_tick) v = std::max(0.0, v - brake_decel * kDt);
  }
  return o;
}

Obstacle make_pedestrian(const Lane& lane, Rng& rng, double ego_s, std::size_t n_ticks) {
  Obstacle o;
  o.kind = ObstacleKind::pedestrian;
  o.radius = 0.5;
  const double s = ego_s + rng.uniform(30.0, 90.0);
  const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
  double lateral = side * (lane.half_width + rng.uniform(1.0, 4.0));
  const double goal = -side * (lane.half_width + 6.0);
  const double speed = rng.uniform(0.8, 1.5);
  const auto start = static_cast<std::size_t>(rng.uniform(0.0, 8.0));
  const LanePose pose = lane.pose_at(s);
  const Vec2 normal{-std::sin(pose.heading), std::cos(pose.heading)};
  for (std::size_t t = 0; t < n_ticks; ++t) {
    o.trajectory.push_back({pose.position.x + lateral * normal.x, pose.position.y + lateral * normal.y});
    if (t >= start && (goal - lateral) * side < 0.0) lateral -= side * speed * kDt;
  }
  return o;
}

Obstacle make_static(const Lane& lane, Rng& rng, double ego_s, std::size_t n_ticks) {
  Obstacle o;
  o.kind = ObstacleKind::static_object;
  o.radius = rng.uniform(0.8, 1.2);
  const double s = ego_s + rng.uniform(20.0, 120.0);
  const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const double lateral = side * rng.uniform(lane.half_width, lane.half_width + 1.5);
  const LanePose pose = lane.pose_at(s);
  const Vec2 p{pose.position.x - lateral * std::sin(pose.heading), pose.position.y + lateral * std::cos(pose.heading)};
  o.trajectory.assign(n_ticks, p);
  return o;
}

// Largest acceleration whose "accelerate once, then brake" continuation keeps
// clearance from every obstacle's true future.
double expert_acceleration(const Lane& lane, const std::vector<Obstacle>& obstacles, std::size_t t, double s,
                           double lateral, double speed, double v_des) {
  const double cap = std::clamp((v_des - speed) / kDt, -8.0, kAccelCandidates.front());
  std::vector<double> candidates{cap};
  for (double a : kAccelCandidates)
    if (a < cap) candidates.push_back(a);
  for (double a : candidates) {
    double s_k = s, v_k = speed;
    bool safe = true;
    for (std::size_t k = 1; k <= kLookahead && safe; ++k) {
      s_k += v_k * kDt;
      v_k = std::max(0.0, k == 1 ? v_k + a * kDt : v_k - kPlanningBrake * kDt);
      const LanePose pose = lane.pose_at(s_k);
      const Vec2 p{pose.position.x - lateral * std::sin(pose.heading),
                   pose.position.y + lateral * std::cos(pose.heading)};
      for (const Obstacle& o : obstacles) {
        const std::size_t tick = std::min(t + k, o.trajectory.size() - 1);
        if (distance(p, o.trajectory[tick]) <= kEgoRadius + o.radius + kExpertMargin) {
          safe = false;
          break;
        }
      }
    }
    if (safe) return a;
  }
  return candidates.back();
}

Episode try_generate(std::uint64_t seed, const ScenarioConfig& sc, int attempt) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
  Episode ep;
  ep.seed = seed;
  ep.scenario = sc.name;
  ep.ticks = sc.ticks;
  ep.lane.half_width = sc.half_width;

  // Lane: short straight lead-in, then random arcs.
  static constexpr std::array<double, 7> kCurvatures{0.0, 1.0 / 60.0, -1.0 / 60.0, 1.0 / 90.0,
                                                    -1.0 / 90.0, 1.0 / 150.0, -1.0 / 150.0};
  ep.lane.segments.push_back({rng.uniform(10.0, 30.0), 0.0});
  double built = ep.lane.segments.back().length;
  while (built < sc.road_length) {
    const double len = rng.uniform(30.0, 70.0);
    const double k = sc.curves ? kCurvatures[rng.index(kCurvatures.size())] : 0.0;
    ep.lane.segments.push_back({len, k});
    built += len;
  }

  const double v_des = rng.uniform(sc.min_speed, sc.max_speed);
  const double v0 = sc.lead_vehicle_braking ? v_des : v_des * rng.uniform(0.7, 1.0);
  const double s0 = 5.0;
  const std::size_t ego_ticks = sc.ticks + kHorizon;
  const std::size_t obs_ticks = ego_ticks + kLookahead;

  if (sc.lead_vehicle_braking) {
    const double gap = rng.uniform(20.0, 30.0);
    const auto brake_tick = static_cast<std::size_t>(rng.uniform(2.0, 5.0));
    ep.obstacles.push_back(make_vehicle(ep.lane, s0, obs_ticks, true, gap, v0, 4.0, brake_tick));
  } else {
    const std::size_t span = sc.max_obstacles - sc.min_obstacles + 1;
    const std::size_t count = sc.min_obstacles + rng.index(span);
    for (std::size_t i = 0; i < count; ++i) {
      const double pick = rng.uniform();
      if (pick < 0.4) {
        const bool braking = rng.uniform() < 0.3;
        const double gap = rng.uniform(25.0, 70.0);
        const double speed = v_des * rng.uniform(0.4, 0.9);
        const auto brake_tick = static_cast<std::size_t>(rng.uniform(4.0, 12.0));
        ep.obstacles.push_back(make_vehicle(ep.lane, s0, obs_ticks, braking, gap, speed, 3.0, brake_tick));
      } else if (pick < 0.7) {
        ep.obstacles.push_back(make_pedestrian(ep.lane, rng, s0, obs_ticks));
      } else {
        ep.obstacles.push_back(make_static(ep.lane, rng, s0, obs_ticks));
      }
    }
  }

  // Expert rollout: pure-pursuit lane following on a kinematic bicycle with
  // lookahead speed control.
  std::vector<EgoState> states;
  EgoState ego{ep.lane.pose_at(s0).position, ep.lane.pose_at(s0).heading, v0};
  for (std::size_t t = 0; t < ego_ticks; ++t) {
    states.push_back(ego);
    const auto [s, lateral] = ep.lane.project(ego.position);
    const double lookahead = std::max(6.0, 1.2 * ego.speed);
    const Vec2 target = ep.lane.pose_at(s + lookahead).position;
    const double alpha = normalize_angle(std::atan2(target.y - ego.position.y, target.x - ego.position.x) - ego.heading);
    const double curvature = std::clamp(2.0 * std::sin(alpha) / lookahead, -0.25, 0.25);
    const double accel = expert_acceleration(ep.lane, ep.obstacles, t, s, lateral, ego.speed, v_des);

    EgoState next;
    next.position = {ego.position.x + ego.speed * kDt * std::cos(ego.heading),
                     ego.position.y + ego.speed * kDt * std::sin(ego.heading)};
    next.heading = normalize_angle(ego.heading + ego.speed * kDt * curvature);
    next.speed = std::max(0.0, ego.speed + accel * kDt);
    ego = next;
  }

  for (std::size_t t = 0; t < ego_ticks; ++t) {
    for (const Obstacle& o : ep.obstacles) {
      if (distance(states[t].position, o.trajectory[t]) < kEgoRadius + o.radius) {
        throw GenerationError("expert rollout collides at tick " + std::to_string(t), seed);
      }
    }
  }

  for (std::size_t t = 0; t < sc.ticks; ++t) {
    Waypoints w{};
    for (std::size_t k = 0; k < kHorizon; ++k) w[k] = world_to_ego(states[t], states[t + k + 1].position);
    ep.expert_trajectory.push_back(w);
    const double turn = normalize_angle(states[t + kHorizon].heading - states[t].heading);
    ep.commands.push_back(turn > 0.15 ? Command::left : (turn < -0.15 ? Command::right : Command::straight));
  }
  states.resize(sc.ticks);
  ep.ego = std::move(states);
  for (Obstacle& o : ep.obstacles) o.trajectory.resize(sc.ticks);

  std::ostringstream id;
  id << sc.name << "-" << std::hex << seed;
  ep.id = id.str();
  for (std::size_t t = 0; t < sc.ticks; ++t) ep.observation_features.push_back(observe(ep, t));
  return ep;
}

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

double normalize_angle(double angle) {
  double a = std::fmod(angle, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

std::string_view to_string(Command command) {
  switch (command) {
    case Command::left: return "left";
    case Command::right: return "right";
    case Command::straight: return "straight";
  }
  return "straight";
}

Command command_from_string(std::string_view name) {
  if (name == "left") return Command::left;
  if (name == "right") return Command::right;
  if (name == "straight") return Command::straight;
  throw VocabularyError("unknown command '" + std::string(name) + "' (expected left, right or straight)");
}

std::string_view to_string(ObstacleKind kind) {
  switch (kind) {
    case ObstacleKind::vehicle: return "vehicle";
    case ObstacleKind::pedestrian: return "pedestrian";
    case ObstacleKind::static_object: return "static";
  }
  return "static";
}

ObstacleKind obstacle_kind_from_string(std::string_view name) {
  if (name == "vehicle") return ObstacleKind::vehicle;
  if (name == "pedestrian") return ObstacleKind::pedestrian;
  if (name == "static") return ObstacleKind::static_object;
  throw VocabularyError("unknown obstacle kind '" + std::string(name) + "'");
}

double Lane::length() const {
  double total = 0.0;
  for (const auto& seg : segments) total += seg.length;
  return total;
}

LanePose Lane::pose_at(double arc_length) const {
  LanePose pose;
  double remaining = std::max(0.0, arc_length);
  for (const auto& seg : segments) {
    if (remaining <= seg.length) return advance(pose, seg.curvature, remaining);
    pose = advance(pose, seg.curvature, seg.length);
    remaining -= seg.length;
  }
  return advance(pose, 0.0, remaining);
}

double Lane::curvature_at(double arc_length) const {
  double start = 0.0;
  for (const auto& seg : segments) {
    if (arc_length < start + seg.length) return seg.curvature;
    start += seg.length;
  }
  return 0.0;
}

std::pair<double, double> Lane::project(Vec2 point) const {
  const double end = length() + 60.0;
  double best_s = 0.0, best_d = std::numeric_limits<double>::infinity();
  for (double s = 0.0; s <= end; s += 1.0) {
    const double d = distance(pose_at(s).position, point);
    if (d < best_d) {
      best_d = d;
      best_s = s;
    }
  }
  double lo = std::max(0.0, best_s - 1.0), hi = best_s + 1.0;
  for (int i = 0; i < 60; ++i) {
    const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
    if (distance(pose_at(m1).position, point) < distance(pose_at(m2).position, point)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  const double s = 0.5 * (lo + hi);
  const LanePose pose = pose_at(s);
  const double dx = point.x - pose.position.x, dy = point.y - pose.position.y;
  const double lateral = -std::sin(pose.heading) * dx + std::cos(pose.heading) * dy;
  return {s, lateral};
}

ScenarioConfig ScenarioConfig::mixed() { return {}; }

ScenarioConfig ScenarioConfig::empty() {
  ScenarioConfig sc;
  sc.name = "empty";
  sc.min_obstacles = 0;
  sc.max_obstacles = 0;
  return sc;
}

ScenarioConfig ScenarioConfig::lead_braking() {
  ScenarioConfig sc;
  sc.name = "lead-braking";
  sc.curves = false;
  sc.min_speed = 8.0;
  sc.max_speed = 12.0;
  sc.lead_vehicle_braking = true;
  sc.min_obstacles = 1;
  sc.max_obstacles = 1;
  return sc;
}

ScenarioConfig ScenarioConfig::by_name(std::string_view name) {
  if (name == "mixed") return mixed();
  if (name == "empty") return empty();
  if (name == "lead-braking") return lead_braking();
  throw VocabularyError("unknown scenario '" + std::string(name) + "' (expected mixed, empty or lead-braking)");
}

void ScenarioConfig::validate() const {
  if (ticks <= kHorizon + 1) throw ContractError("scenario needs more than horizon + 1 ticks");
  if (min_obstacles > max_obstacles) throw ContractError("scenario obstacle range is empty");
  if (!(min_speed > 0.0 && min_speed <= max_speed)) throw ContractError("scenario speed range is invalid");
  if (!(road_length > 0.0) || !(half_width > 0.0)) throw ContractError("scenario map extent must be positive");
  if (max_retries < 1) throw ContractError("scenario max_retries must be at least 1");
}

Episode generate_episode(std::uint64_t seed, const ScenarioConfig& scenario) {
  scenario.validate();
  for (int attempt = 0; attempt < scenario.max_retries; ++attempt) {
    try {
      return try_generate(seed, scenario, attempt);
    } catch (const GenerationError&) {
      // next attempt draws a fresh layout
    }
  }
  throw GenerationError("no collision-free expert path after " + std::to_string(scenario.max_retries) + " attempts",
                        seed);
}

std::vector<Episode> generate_dataset(std::uint64_t base_seed, std::size_t count, const ScenarioConfig& scenario) {
  std::vector<Episode> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_episode(derive_seed(base_seed, i), scenario));
  return out;
}

Split split_of(std::size_t index, std::size_t count) {
  if (index * 10 < count * 7) return Split::train;
  if (index * 10 < count * 8) return Split::val;
  return Split::test;
}

std::vector<const Episode*> select_split(const std::vector<Episode>& episodes, Split split) {
  std::vector<const Episode*> out;
  for (std::size_t i = 0; i < episodes.size(); ++i)
    if (split_of(i, episodes.size()) == split) out.push_back(&episodes[i]);
  return out;
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw VocabularyError("unknown split '" + std::string(name) + "'");
}

WorldSnapshot snapshot(const Episode& episode, std::size_t t) {
  if (t >= episode.ticks) {
    throw BoundsError("tick " + std::to_string(t) + " outside episode of " + std::to_string(episode.ticks) + " ticks");
  }
  const EgoState& ego = episode.ego[t];
  WorldSnapshot s;
  const auto [arc, lateral] = episode.lane.project(ego.position);
  s.speed = ego.speed;
  s.lane_offset = lateral;
  s.heading_error = normalize_angle(ego.heading - episode.lane.pose_at(arc).heading);
  s.curvature_ahead = {episode.lane.curvature_at(arc), episode.lane.curvature_at(arc + 15.0),
                       episode.lane.curvature_at(arc + 30.0)};
  s.command = episode.commands[t];
  s.half_width = episode.lane.half_width;
  const std::size_t prev = t == 0 ? 0 : t - 1;
  for (const Obstacle& o : episode.obstacles) {
    s.obstacles_now.push_back(world_to_ego(ego, o.trajectory[t]));
    s.obstacles_prev.push_back(world_to_ego(ego, o.trajectory[prev]));
  }
  return s;
}

ViewFeatures observe_snapshot(const WorldSnapshot& state) {
  const Projection& p = projection();
  ViewFeatures out{};
  for (std::size_t v = 0; v < kViews; ++v) {
    const auto x = state_vector(state, v);
    for (std::size_t i = 0; i < kObsDim; ++i) {
      double acc = p.bias[v][i];
      for (std::size_t j = 0; j < kStateDim; ++j) acc += p.weight[v][i * kStateDim + j] * x[j];
      out[v][i] = std::tanh(acc);
    }
  }
  return out;
}

ViewFeatures observe(const Episode& episode, std::size_t t) { return observe_snapshot(snapshot(episode, t)); }

ViewFeatures bias_embedding(Command command) {
  const Projection& p = projection();
  ViewFeatures out{};
  const std::size_t col = 6 + static_cast<std::size_t>(command);
  for (std::size_t v = 0; v < kViews; ++v)
    for (std::size_t i = 0; i < kObsDim; ++i) out[v][i] = std::tanh(p.bias[v][i] + p.weight[v][i * kStateDim + col]);
  return out;
}

double observation_lipschitz_bound() {
  // tanh is 1-Lipschitz; each gated RBF term has gradient norm at most
  // 1/(sigma*sqrt(e)) + 1/8, and the Frobenius norm bounds the spectral norm.
  const double per_center = 1.0 / (kRbfSigma * std::sqrt(std::numbers::e)) + 0.125;
  const double jacobian = std::sqrt(static_cast<double>(kRbfCount)) * per_center;
  const Projection& p = projection();
  double total = 0.0;
  for (std::size_t v = 0; v < kViews; ++v) {
    double frob = 0.0;
    for (std::size_t i = 0; i < kObsDim; ++i)
      for (std::size_t j = kEgoTerms; j < kEgoTerms + kRbfCount; ++j) frob += std::pow(p.weight[v][i * kStateDim + j], 2);
    total += frob * jacobian * jacobian;
  }
  return std::sqrt(total);
}

Vec2 ego_to_world(const EgoState& pose, Vec2 local) {
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  return {pose.position.x + c * local.x - s * local.y, pose.position.y + s * local.x + c * local.y};
}

Vec2 world_to_ego(const EgoState& pose, Vec2 world) {
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  const double dx = world.x - pose.position.x, dy = world.y - pose.position.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

std::optional<std::size_t> check_collision(const Waypoints& plan, const Episode& episode, std::size_t t) {
  if (t + kHorizon > episode.ticks - 1 || t >= episode.ticks) {
    throw BoundsError("collision check at tick " + std::to_string(t) + " needs " + std::to_string(kHorizon) +
                      " future ticks; episode has " + std::to_string(episode.ticks));
  }
  for (std::size_t k = 0; k < kHorizon; ++k) {
    const Vec2 p = ego_to_world(episode.ego[t], plan[k]);
    for (const Obstacle& o : episode.obstacles) {
      if (distance(p, o.trajectory[t + k + 1]) < kEgoRadius + o.radius) return k;
    }
  }
  return std::nullopt;
}

json to_json(const Episode& ep) {
  json lane = {{"half_width", ep.lane.half_width}, {"segments", json::array()}};
  for (const auto& seg : ep.lane.segments) lane["segments"].push_back({seg.length, seg.curvature});
  json commands = json::array();
  for (Command c : ep.commands) commands.push_back(to_string(c));
  json ego = json::array();
  for (const auto& e : ep.ego) ego.push_back({e.position.x, e.position.y, e.heading, e.speed});
  json obstacles = json::array();
  for (const auto& o : ep.obstacles) {
    json traj = json::array();
    for (Vec2 p : o.trajectory) traj.push_back(vec_json(p));
    obstacles.push_back({{"kind", to_string(o.kind)}, {"radius", o.radius}, {"trajectory", traj}});
  }
  json expert = json::array();
  for (const auto& w : ep.expert_trajectory) {
    json pts = json::array();
    for (Vec2 p : w) pts.push_back(vec_json(p));
    expert.push_back(pts);
  }
  json features = json::array();
  for (const auto& views : ep.observation_features) {
    json per_tick = json::array();
    for (const auto& f : views) per_tick.push_back(f);
    features.push_back(per_tick);
  }
  return {{"id", ep.id},
          {"seed", ep.seed},
          {"scenario", ep.scenario},
          {"ticks", ep.ticks},
          {"dt", kDt},
          {"lane", lane},
          {"commands", commands},
          {"ego", ego},
          {"obstacles", obstacles},
          {"expert_trajectory", expert},
          {"observation_features", features}};
}

Episode episode_from_json(const json& doc) {
  try {
    Episode ep;
    ep.id = doc.at("id").get<std::string>();
    ep.seed = doc.at("seed").get<std::uint64_t>();
    ep.scenario = doc.at("scenario").get<std::string>();
    ep.ticks = doc.at("ticks").get<std::size_t>();
    ep.lane.half_width = doc.at("lane").at("half_width").get<double>();
    for (const auto& seg : doc.at("lane").at("segments")) ep.lane.segments.push_back({seg.at(0), seg.at(1)});
    for (const auto& c : doc.at("commands")) ep.commands.push_back(command_from_string(c.get<std::string>()));
    for (const auto& e : doc.at("ego")) ep.ego.push_back({{e.at(0), e.at(1)}, e.at(2), e.at(3)});
    for (const auto& o : doc.at("obstacles")) {
      Obstacle ob;
      ob.kind = obstacle_kind_from_string(o.at("kind").get<std::string>());
      ob.radius = o.at("radius").get<double>();
      for (const auto& p : o.at("trajectory")) ob.trajectory.push_back(vec_from(p));
      ep.obstacles.push_back(std::move(ob));
    }
    for (const auto& w : doc.at("expert_trajectory")) {
      Waypoints pts{};
      if (w.size() != kHorizon) throw LoadError("expert trajectory must have " + std::to_string(kHorizon) + " waypoints");
      for (std::size_t k = 0; k < kHorizon; ++k) pts[k] = vec_from(w.at(k));
      ep.expert_trajectory.push_back(pts);
    }
    for (const auto& per_tick : doc.at("observation_features")) {
      ViewFeatures f{};
      if (per_tick.size() != kViews) throw LoadError("observation features must have " + std::to_string(kViews) + " views");
      for (std::size_t v = 0; v < kViews; ++v) {
        const auto values = per_tick.at(v).get<std::vector<double>>();
        if (values.size() != kObsDim) throw LoadError("observation feature width mismatch");
        std::copy(values.begin(), values.end(), f[v].begin());
      }
      ep.observation_features.push_back(f);
    }
    const std::size_t n = ep.ticks;
    if (ep.commands.size() != n || ep.ego.size() != n || ep.expert_trajectory.size() != n ||
        ep.observation_features.size() != n) {
      throw LoadError("episode " + ep.id + ": per-tick arrays disagree with tick count");
    }
    for (const auto& o : ep.obstacles)
      if (o.trajectory.size() != n) throw LoadError("episode " + ep.id + ": obstacle trajectory length mismatch");
    return ep;
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed episode record: ") + e.what());
  }
}

std::string serialize_dataset(const std::vector<Episode>& episodes) {
  std::string out;
  for (const auto& ep : episodes) {
    out += to_json(ep).dump();
    out += '\n';
  }
  return out;
}

void write_dataset(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write dataset " + path);
  out << serialize_dataset(episodes);
}

std::vector<Episode> read_dataset(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<Episode> episodes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      episodes.push_back(episode_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw LoadError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (episodes.empty()) throw LoadError("dataset " + path + " holds no episodes");
  return episodes;
}

}  // namespace flowplan::sim
