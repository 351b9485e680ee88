// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flowplan/planner.hpp"
#include "flowplan/stability.hpp"
#include "flowplan/world_model.hpp"

namespace flowplan {

struct LossWeights {
  double lambda_score = 0.5;
  double lambda_rec = 0.2;
  double lambda_flow = 0.1;

  void validate() const;
};

enum class TrajectorySupervision { winner_take_all, all_modes };

/// Everything that determines a training run. Serialized as nested sections
/// (run, planner, flow, selection, loss, data); `set` takes dotted keys.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 8;
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  double grad_clip = 5.0;
  std::size_t tick_stride = 1;  // use every n-th plannable tick for training

  planner::PlannerConfig planner;
  world::WorldModelConfig world;
  selection::SelectionWeights selection;
  LossWeights loss;
  TrajectorySupervision trajectory_supervision = TrajectorySupervision::winner_take_all;

  std::string dataset;

  nlohmann::json to_json() const;
  /// Applies every key present in `doc`; unknown sections or keys throw LoadError.
  void apply(const nlohmann::json& doc);
  /// `key` is "section.name"; `value` is parsed as JSON, falling back to a bare string.
  void set(std::string_view key, std::string_view value);
  /// "section.name=value".
  void apply_override(std::string_view assignment);
  void validate() const;

  static RunConfig from_json(const nlohmann::json& doc);
  /// Reads a .json document or a flat TOML subset ([section] / key = value).
  static RunConfig load(const std::string& path);
};

/// Parses the TOML subset used by run configs into nested JSON.
nlohmann::json parse_toml_subset(std::string_view text);

}  // namespace flowplan
