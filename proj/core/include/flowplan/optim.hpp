// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowplan/nn.hpp"

namespace flowplan::optim {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled (AdamW-style) decay; 0 gives plain Adam.
  double weight_decay = 0.0;

  void validate() const;
};

struct OptimizerState {
  AdamConfig config;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
  std::uint64_t step_count = 0;
};

/// One bias-corrected adaptive-moment update of every parameter, in place.
/// Each parameter must carry a gradient buffer (run ParameterSet::zero_grad
/// before the forward pass); a missing one throws ContractError naming it.
void adam_step(nn::ParameterSet& params, OptimizerState& state);

}  // namespace flowplan::optim
