// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "flowplan/config.hpp"
#include "flowplan/sim.hpp"
#include "flowplan/trainer.hpp"

namespace flowplan::eval {

inline constexpr std::size_t kHorizonCount = 3;  // 1 s, 2 s, 3 s
inline constexpr double kTtcThreshold = 1.0;     // seconds
inline constexpr double kTtcMargin = 0.5;        // meters added to both discs
inline constexpr double kMaxAcceleration = 4.89;  // m/s^2
inline constexpr double kMaxJerk = 8.37;          // m/s^3

/// Steps covered by horizon index h (0 -> 1 s): the first 2(h+1) waypoints.
std::size_t steps_for_horizon(std::size_t h);

struct L2Metrics {
  std::array<double, kHorizonCount> l2_at{};
  double l2_avg = 0.0;
  std::vector<double> step_errors;
};

struct CollisionRates {
  std::array<double, kHorizonCount> cr_at{};  // percent
  double cr_avg = 0.0;
  std::vector<double> cumulative;  // percent of runs collided by each step
};

struct PlanMetrics {
  std::array<double, kHorizonCount> l2_at{};
  double l2_avg = 0.0;
  std::array<double, kHorizonCount> cr_at{};
  double cr_avg = 0.0;

  nlohmann::json to_json() const;
};

struct PdmsSubscores {
  double nc = 1.0;
  double dac = 1.0;
  double ep = 1.0;
  double ttc = 1.0;
  double comfort = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Prefix-averaged displacement: the value at horizon h is the mean of the
/// per-step errors of every step up to h. Needs H = 6 on both sides.
L2Metrics l2_displacement(std::span<const sim::Vec2> pred, std::span<const sim::Vec2> gt);

struct PlannedRun {
  sim::Waypoints plan{};
  const sim::Episode* episode = nullptr;
  std::size_t tick = 0;
};

/// Each run counts once, at its first colliding step; the per-step cumulative
/// rates are prefix-averaged like L2.
CollisionRates collision_rate(std::span<const PlannedRun> runs);

/// NC × DAC × (5(EP + TTC) + 2C) / 12.
double pdms(const PdmsSubscores& s);

struct RunScores {
  std::optional<std::size_t> collision;  // first colliding step
  double dac_fraction = 1.0;             // waypoints inside the lane
  double ep = 1.0;                       // progress relative to the expert, clamped
  bool ttc_ok = true;
  bool comfortable = true;
};

RunScores score_run(const PlannedRun& run);
PdmsSubscores aggregate_subscores(std::span<const RunScores> runs);

enum class Policy { model, expert, constant_velocity };
std::string_view to_string(Policy policy);
Policy policy_from_string(std::string_view name);

/// Constant speed straight ahead in the ego frame.
sim::Waypoints constant_velocity_plan(const sim::Episode& episode, std::size_t t);

struct RunRecord {
  std::string episode;
  std::size_t tick = 0;
  std::size_t mode = 0;
  std::vector<double> step_errors;
  RunScores scores;
};

struct EvalReport {
  std::string policy;
  std::size_t episodes = 0;
  std::size_t runs = 0;
  PlanMetrics metrics;
  PdmsSubscores subscores;
  double pdms = 0.0;
  std::vector<RunRecord> records;
  /// Wall-clock inference time per episode; kept out of the JSON report.
  std::vector<double> episode_latency_ms;

  double mean_latency_ms() const;
  nlohmann::json to_json() const;
  /// One row per (episode, tick) run.
  std::string csv() const;
};

/// Inference-only evaluation: the planner's argmax-score mode at every
/// plannable tick. `model` may be null for the non-learned policies.
EvalReport evaluate(const Model* model, const std::vector<const sim::Episode*>& episodes,
                    Policy policy = Policy::model);

/// report.json and runs.csv under `out_dir`.
void write_report(const EvalReport& report, const std::string& out_dir);

// Ablations --------------------------------------------------------------

struct Variant {
  std::string name;
  std::vector<std::string> overrides;  // "section.key=value"
};

struct SweepSpec {
  std::string name;
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  /// steps, selection, world.
  static SweepSpec preset(std::string_view name);
  /// {"name": ..., "seeds": [...], "variants": [{"name": ..., "set": {"flow.K": 1}}]}; a variant may
  /// also list "overrides": ["flow.K=1"].
  static SweepSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one value
};
Stat summarize(std::span<const double> values);

struct SeedResult {
  std::uint64_t seed = 0;
  nlohmann::json report;  // evaluate output without per-run rows
  std::string checkpoint_hash;
  double flow_loss_drop = 0.0;
  double val_score_agreement = 0.0;
};

struct VariantResult {
  Variant variant;
  std::vector<SeedResult> seeds;
  std::vector<std::string> errors;  // one entry per failed seed

  Stat stat(const std::string& metric) const;  // "l2_avg", "cr_avg", "l2_1s", ..., "pdms"
};

struct AblationReport {
  std::string sweep;
  std::vector<std::uint64_t> seeds;
  std::vector<VariantResult> variants;

  const VariantResult& variant(std::string_view name) const;
  nlohmann::json to_json() const;
  /// Aligned text table, one row per variant, mean ± std per column.
  std::string table() const;
  std::string csv() const;
};

struct AblationOptions {
  sim::Split split = sim::Split::test;
  std::ostream* progress = nullptr;
};

/// Trains and evaluates every variant under every seed. A failed run is
/// recorded on its variant and the sweep continues.
AblationReport run_ablation(const RunConfig& base, const SweepSpec& spec, const std::vector<sim::Episode>& dataset,
                            const AblationOptions& options = {});

struct DirectionalCheck {
  std::string name;
  std::string lhs, rhs;  // variants
  std::string metric;
  double lhs_value = 0.0, rhs_value = 0.0;
  bool passed = false;
};

/// The expected orderings for the preset sweeps (lhs ≤ rhs on the metric).
/// Sweeps without a known ordering yield no checks.
std::vector<DirectionalCheck> directional_checks(const AblationReport& report);

}  // namespace flowplan::eval
