// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "flowplan/nn.hpp"
#include "flowplan/optim.hpp"
#include "flowplan/rng.hpp"

namespace flowplan {

/// Parameter values, optimizer moments and RNG state of one training run,
/// plus free-form metadata (config snapshot, anchor templates). JSON numbers
/// round-trip doubles exactly, so save/load is bit-exact.
struct Checkpoint {
  nlohmann::json params;  // name -> {"shape": [r, c], "data": [...]}
  optim::OptimizerState optimizer;
  std::string rng_state;
  nlohmann::json metadata = nlohmann::json::object();

  static Checkpoint capture(const nn::ParameterSet& params, const optim::OptimizerState& state, const Rng& rng);
  /// Copies stored values into `params`; throws LoadError on a missing or mis-shaped entry.
  void restore_params(nn::ParameterSet& params) const;

  nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json& doc);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  /// SHA-256 over the canonical serialization of parameters and optimizer state.
  std::string content_hash() const;
};

}  // namespace flowplan
