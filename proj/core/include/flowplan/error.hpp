// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace flowplan {

/// Tensor or container dimensions do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition of an operation was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Index outside the valid range of an episode or container.
class BoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Unknown command tag or other vocabulary lookup failure.
class VocabularyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Scenario could not produce a collision-free expert rollout.
class GenerationError : public std::runtime_error {
 public:
  GenerationError(const std::string& what, unsigned long long seed)
      : std::runtime_error(what + " (seed " + std::to_string(seed) + ")"), seed_(seed) {}
  unsigned long long seed() const noexcept { return seed_; }

 private:
  unsigned long long seed_;
};

/// Checkpoint, dataset or config could not be read.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss component.
class TrainingAbort : public std::runtime_error {
 public:
  TrainingAbort(const std::string& component, const std::string& what)
      : std::runtime_error(what), component_(component) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

}  // namespace flowplan
