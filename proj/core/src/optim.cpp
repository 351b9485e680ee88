// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/optim.hpp"

#include <cmath>

#include "flowplan/error.hpp"

namespace flowplan::optim {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ContractError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ContractError("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0 && epsilon < 1e-2)) throw ContractError("epsilon must lie in (0, 1e-2)");
  if (weight_decay < 0.0) throw ContractError("weight_decay must be non-negative");
}

void adam_step(nn::ParameterSet& params, OptimizerState& state) {
  const AdamConfig& c = state.config;
  c.validate();
  for (const auto& [name, t] : params.entries()) {
    if (t.grad().size() != t.numel()) throw ContractError("adam_step: parameter '" + name + "' has no gradient");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (const auto& [name, param] : params.entries()) {
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.size() != param.numel()) m.assign(param.numel(), 0.0);
    if (v.size() != param.numel()) v.assign(param.numel(), 0.0);
    ad::Tensor p = param;
    auto values = p.mutable_data();
    const auto grad = param.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= c.learning_rate * (m_hat / (std::sqrt(v_hat) + c.epsilon) + c.weight_decay * values[i]);
    }
  }
}

}  // namespace flowplan::optim
