// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flowplan::sim {

inline constexpr double kDt = 0.5;            // seconds per tick
inline constexpr std::size_t kHorizon = 6;    // waypoints per plan (3 s)
inline constexpr std::size_t kViews = 2;      // simulated views: front, rear
inline constexpr std::size_t kObsDim = 32;    // features per view
inline constexpr double kEgoRadius = 1.0;     // collision disc, meters
inline constexpr std::size_t kCommandCount = 3;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

double distance(Vec2 a, Vec2 b);

/// Wraps an angle to (-pi, pi].
double normalize_angle(double angle);

enum class Command { left = 0, right = 1, straight = 2 };
std::string_view to_string(Command command);
Command command_from_string(std::string_view name);

struct EgoState {
  Vec2 position;
  double heading = 0.0;  // radians, (-pi, pi]
  double speed = 0.0;    // m/s, >= 0
  bool operator==(const EgoState&) const = default;
};

enum class ObstacleKind { vehicle, pedestrian, static_object };
std::string_view to_string(ObstacleKind kind);
ObstacleKind obstacle_kind_from_string(std::string_view name);

struct Obstacle {
  std::vector<Vec2> trajectory;  // one position per tick
  double radius = 1.0;
  ObstacleKind kind = ObstacleKind::vehicle;
  bool operator==(const Obstacle&) const = default;
};

struct LaneSegment {
  double length = 0.0;
  double curvature = 0.0;  // 1/m, positive turns left
  bool operator==(const LaneSegment&) const = default;
};

struct LanePose {
  Vec2 position;
  double heading = 0.0;
};

/// Piecewise-constant-curvature centerline starting at the origin heading +x.
struct Lane {
  std::vector<LaneSegment> segments;
  double half_width = 3.5;

  double length() const;
  LanePose pose_at(double arc_length) const;
  double curvature_at(double arc_length) const;
  /// Arc length of the closest centerline point and signed lateral offset (left positive).
  std::pair<double, double> project(Vec2 point) const;
  bool operator==(const Lane&) const = default;
};

using Waypoints = std::array<Vec2, kHorizon>;
using ViewFeatures = std::array<std::array<double, kObsDim>, kViews>;

struct Episode {
  std::string id;
  std::uint64_t seed = 0;
  std::string scenario;
  std::size_t ticks = 0;
  Lane lane;
  std::vector<Command> commands;
  std::vector<EgoState> ego;
  std::vector<Obstacle> obstacles;
  std::vector<Waypoints> expert_trajectory;       // ego frame, next kHorizon ticks
  std::vector<ViewFeatures> observation_features;

  /// Ticks t with a full future horizon inside the episode: t + kHorizon <= ticks - 1.
  std::size_t plannable_ticks() const { return ticks > kHorizon ? ticks - kHorizon : 0; }
  bool operator==(const Episode&) const = default;
};

struct ScenarioConfig {
  std::string name = "mixed";
  std::size_t ticks = 16;
  double road_length = 240.0;
  double half_width = 3.5;
  std::size_t min_obstacles = 1;
  std::size_t max_obstacles = 4;
  double min_speed = 6.0;
  double max_speed = 12.0;
  bool curves = true;
  bool lead_vehicle_braking = false;
  int max_retries = 25;

  static ScenarioConfig mixed();
  static ScenarioConfig empty();
  static ScenarioConfig lead_braking();
  static ScenarioConfig by_name(std::string_view name);
  void validate() const;
};

/// Deterministic in (seed, scenario). Throws GenerationError carrying the
/// seed when no collision-free expert rollout is found.
Episode generate_episode(std::uint64_t seed, const ScenarioConfig& scenario);

/// Episode seeds are derived from `base_seed` by index; index order doubles as
/// the split order (70 / 10 / 20 train / val / test).
std::vector<Episode> generate_dataset(std::uint64_t base_seed, std::size_t count, const ScenarioConfig& scenario);

enum class Split { train, val, test };
Split split_of(std::size_t index, std::size_t count);
std::vector<const Episode*> select_split(const std::vector<Episode>& episodes, Split split);
Split split_from_string(std::string_view name);

// Observation features ---------------------------------------------------

/// Privileged scene state at one tick, in the ego frame where it matters.
struct WorldSnapshot {
  double speed = 0.0;
  double lane_offset = 0.0;
  double heading_error = 0.0;
  std::array<double, 3> curvature_ahead{};
  Command command = Command::straight;
  double half_width = 3.5;
  std::vector<Vec2> obstacles_now;   // ego frame
  std::vector<Vec2> obstacles_prev;  // previous tick, current ego frame
};

WorldSnapshot snapshot(const Episode& episode, std::size_t t);
/// Fixed, seeded projection of a snapshot to V feature vectors. Pure.
ViewFeatures observe_snapshot(const WorldSnapshot& state);
ViewFeatures observe(const Episode& episode, std::size_t t);
/// Features of an empty, stationary, lane-centered scene under `command`.
ViewFeatures bias_embedding(Command command);
/// Upper bound on |features(p + d) - features(p)| / |d| for a move d of a
/// single obstacle's current position.
double observation_lipschitz_bound();

// Geometry ---------------------------------------------------------------

Vec2 ego_to_world(const EgoState& pose, Vec2 local);
Vec2 world_to_ego(const EgoState& pose, Vec2 world);

/// First horizon index whose waypoint disc overlaps an obstacle disc at the
/// matching future tick (waypoint k is tick t + k + 1), or nullopt.
std::optional<std::size_t> check_collision(const Waypoints& plan, const Episode& episode, std::size_t t);

// Serialization ----------------------------------------------------------

nlohmann::json to_json(const Episode& episode);
Episode episode_from_json(const nlohmann::json& doc);
/// One JSON document per line.
std::string serialize_dataset(const std::vector<Episode>& episodes);
void write_dataset(const std::string& path, const std::vector<Episode>& episodes);
std::vector<Episode> read_dataset(const std::string& path);

}  // namespace flowplan::sim
