// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace flowplan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAssertion = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFailure = 3;

/// Runs one verb. `args` excludes the program name. Errors go to `err` as
/// one JSON object per line.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Verbs in help order.
std::vector<std::string> verbs();
/// Long option names accepted by `verb` (e.g. "--out").
std::vector<std::string> options_of(const std::string& verb);

}  // namespace flowplan::cli
