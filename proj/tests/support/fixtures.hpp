// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "flowplan/config.hpp"
#include "flowplan/tensor.hpp"
#include "flowplan/sim.hpp"

namespace flowplan::testing {

/// Small dimensions and one short epoch; for tests that only need the plumbing.
RunConfig tiny_config();
/// `count` mixed episodes from a fixed seed, cached per count.
const std::vector<sim::Episode>& tiny_dataset(std::size_t count = 20);

std::string golden_dir();
std::string temp_dir(const std::string& name);

/// Compares `value` with golden/<name>.json to 1e-12. With FLOWPLAN_REGEN_GOLDEN=1
/// in the environment the file is rewritten instead. Returns a failure message or "".
std::string check_golden(const std::string& name, const ad::Tensor& value);

}  // namespace flowplan::testing
