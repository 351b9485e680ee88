// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "flowplan/error.hpp"

namespace flowplan::eval {

using nlohmann::json;

namespace {

constexpr std::array<const char*, kHorizonCount> kHorizonNames{"1s", "2s", "3s"};

double mean(std::span<const double> values) {
  double total = 0.0;
  for (double v : values) total += v;
  return values.empty() ? 0.0 : total / static_cast<double>(values.size());
}

template <typename Array>
json horizon_json(const Array& values) {
  json out = json::object();
  for (std::size_t h = 0; h < kHorizonCount; ++h) out[kHorizonNames[h]] = values[h];
  return out;
}

std::string format_stat(const Stat& s, int precision) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << s.mean << " ± " << s.std;
  return out.str();
}

// Display width in code points; the table uses "±".
std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
  return n;
}

}  // namespace

std::size_t steps_for_horizon(std::size_t h) {
  if (h >= kHorizonCount) throw BoundsError("horizon index " + std::to_string(h) + " out of range");
  return static_cast<std::size_t>(std::lround((static_cast<double>(h) + 1.0) / sim::kDt));
}

json PlanMetrics::to_json() const {
  return {{"l2", horizon_json(l2_at)}, {"l2_avg", l2_avg}, {"cr", horizon_json(cr_at)}, {"cr_avg", cr_avg}};
}

void PdmsSubscores::validate() const {
  for (double v : {nc, dac, ep, ttc, comfort}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("PDMS subscores must lie in [0, 1], got " + std::to_string(v));
  }
}

json PdmsSubscores::to_json() const {
  return {{"nc", nc}, {"dac", dac}, {"ep", ep}, {"ttc", ttc}, {"comfort", comfort}};
}

L2Metrics l2_displacement(std::span<const sim::Vec2> pred, std::span<const sim::Vec2> gt) {
  if (pred.size() != gt.size() || pred.size() != sim::kHorizon) {
    throw ShapeError("l2_displacement needs " + std::to_string(sim::kHorizon) + " waypoints on both sides, got " +
                     std::to_string(pred.size()) + " and " + std::to_string(gt.size()));
  }
  L2Metrics out;
  for (std::size_t k = 0; k < pred.size(); ++k) out.step_errors.push_back(sim::distance(pred[k], gt[k]));
  for (std::size_t h = 0; h < kHorizonCount; ++h) {
    out.l2_at[h] = mean(std::span<const double>(out.step_errors).first(steps_for_horizon(h)));
  }
  out.l2_avg = mean(out.l2_at);
  return out;
}

CollisionRates collision_rate(std::span<const PlannedRun> runs) {
  if (runs.empty()) throw ContractError("collision_rate over an empty run list");
  std::vector<double> collided_by(sim::kHorizon, 0.0);
  for (const PlannedRun& run : runs) {
    if (run.episode == nullptr) throw ContractError("collision_rate: run without an episode");
    if (const auto first = sim::check_collision(run.plan, *run.episode, run.tick)) {
      for (std::size_t k = *first; k < sim::kHorizon; ++k) collided_by[k] += 1.0;
    }
  }
  CollisionRates out;
  for (double& c : collided_by) c = 100.0 * c / static_cast<double>(runs.size());
  out.cumulative = collided_by;
  for (std::size_t h = 0; h < kHorizonCount; ++h) {
    out.cr_at[h] = mean(std::span<const double>(collided_by).first(steps_for_horizon(h)));
  }
  out.cr_avg = mean(out.cr_at);
  return out;
}

double pdms(const PdmsSubscores& s) {
  s.validate();
  return s.nc * s.dac * (5.0 * (s.ep + s.ttc) + 2.0 * s.comfort) / 12.0;
}

RunScores score_run(const PlannedRun& run) {
  if (run.episode == nullptr) throw ContractError("score_run: run without an episode");
  const sim::Episode& ep = *run.episode;
  const sim::EgoState& pose = ep.ego.at(run.tick);
  RunScores out;
  out.collision = sim::check_collision(run.plan, ep, run.tick);

  std::size_t inside = 0;
  for (const sim::Vec2& p : run.plan) {
    inside += std::abs(ep.lane.project(sim::ego_to_world(pose, p)).second) <= ep.lane.half_width ? 1 : 0;
  }
  out.dac_fraction = static_cast<double>(inside) / static_cast<double>(sim::kHorizon);

  const double s0 = ep.lane.project(pose.position).first;
  const double s_plan = ep.lane.project(sim::ego_to_world(pose, run.plan.back())).first;
  const double s_expert = ep.lane.project(sim::ego_to_world(pose, ep.expert_trajectory.at(run.tick).back())).first;
  const double expert_progress = s_expert - s0;
  out.ep = expert_progress > 0.5 ? std::clamp((s_plan - s0) / expert_progress, 0.0, 1.0) : 1.0;

  for (std::size_t k = 0; k < sim::kHorizon && out.ttc_ok; ++k) {
    const double time = static_cast<double>(k + 1) * sim::kDt;
    const sim::Vec2 p = sim::ego_to_world(pose, run.plan[k]);
    for (const sim::Obstacle& o : ep.obstacles) {
      const std::size_t tick = std::min(run.tick + k + 1, o.trajectory.size() - 1);
      if (sim::distance(p, o.trajectory[tick]) < sim::kEgoRadius + o.radius + kTtcMargin && time <= kTtcThreshold) {
        out.ttc_ok = false;
        break;
      }
    }
  }

  sim::Vec2 prev_pos{0.0, 0.0}, prev_vel{pose.speed, 0.0}, prev_acc{};
  for (std::size_t k = 0; k < sim::kHorizon; ++k) {
    const sim::Vec2 vel{(run.plan[k].x - prev_pos.x) / sim::kDt, (run.plan[k].y - prev_pos.y) / sim::kDt};
    const sim::Vec2 acc{(vel.x - prev_vel.x) / sim::kDt, (vel.y - prev_vel.y) / sim::kDt};
    if (std::hypot(acc.x, acc.y) > kMaxAcceleration) out.comfortable = false;
    if (k > 0 && std::hypot(acc.x - prev_acc.x, acc.y - prev_acc.y) / sim::kDt > kMaxJerk) out.comfortable = false;
    prev_pos = run.plan[k];
    prev_vel = vel;
    prev_acc = acc;
  }
  return out;
}

PdmsSubscores aggregate_subscores(std::span<const RunScores> runs) {
  if (runs.empty()) throw ContractError("aggregate_subscores over an empty run list");
  PdmsSubscores s{0.0, 0.0, 0.0, 0.0, 0.0};
  for (const RunScores& r : runs) {
    s.nc += r.collision ? 0.0 : 1.0;
    s.dac += r.dac_fraction;
    s.ep += r.ep;
    s.ttc += r.ttc_ok ? 1.0 : 0.0;
    s.comfort += r.comfortable ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(runs.size());
  return {s.nc / n, s.dac / n, s.ep / n, s.ttc / n, s.comfort / n};
}

std::string_view to_string(Policy policy) {
  switch (policy) {
    case Policy::model: return "model";
    case Policy::expert: return "expert";
    case Policy::constant_velocity: return "constant_velocity";
  }
  return "model";
}

Policy policy_from_string(std::string_view name) {
  if (name == "model") return Policy::model;
  if (name == "expert") return Policy::expert;
  if (name == "constant_velocity") return Policy::constant_velocity;
  throw VocabularyError("unknown policy '" + std::string(name) + "' (expected model, expert or constant_velocity)");
}

sim::Waypoints constant_velocity_plan(const sim::Episode& episode, std::size_t t) {
  const double v = episode.ego.at(t).speed;
  sim::Waypoints w{};
  for (std::size_t k = 0; k < sim::kHorizon; ++k) w[k] = {v * sim::kDt * static_cast<double>(k + 1), 0.0};
  return w;
}

double EvalReport::mean_latency_ms() const { return mean(episode_latency_ms); }

json EvalReport::to_json() const {
  return {{"policy", policy},
          {"episodes", episodes},
          {"runs", runs},
          {"metrics", metrics.to_json()},
          {"pdms_subscores", subscores.to_json()},
          {"pdms", pdms}};
}

std::string EvalReport::csv() const {
  std::ostringstream out;
  out << std::setprecision(17) << "episode,tick,mode";
  for (std::size_t k = 0; k < sim::kHorizon; ++k) out << ",err_" << (k + 1);
  for (std::size_t h = 0; h < kHorizonCount; ++h) out << ",l2_" << kHorizonNames[h];
  out << ",collision_step,dac,ep,ttc_ok,comfortable\n";
  for (const RunRecord& r : records) {
    out << r.episode << ',' << r.tick << ',' << r.mode;
    for (double e : r.step_errors) out << ',' << e;
    for (std::size_t h = 0; h < kHorizonCount; ++h) {
      out << ',' << mean(std::span<const double>(r.step_errors).first(steps_for_horizon(h)));
    }
    out << ',' << (r.scores.collision ? static_cast<long>(*r.scores.collision) : -1L) << ',' << r.scores.dac_fraction
        << ',' << r.scores.ep << ',' << r.scores.ttc_ok << ',' << r.scores.comfortable << '\n';
  }
  return out.str();
}

EvalReport evaluate(const Model* model, const std::vector<const sim::Episode*>& episodes, Policy policy) {
  if (policy == Policy::model && model == nullptr) throw ContractError("evaluate: the model policy needs a model");
  if (episodes.empty()) throw ContractError("evaluate: no episodes");
  ad::NoGradGuard no_grad;
  EvalReport report;
  report.policy = std::string(to_string(policy));
  report.episodes = episodes.size();

  std::vector<PlannedRun> runs;
  std::vector<double> l2_rows[kHorizonCount];
  for (const sim::Episode* ep : episodes) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::pair<sim::Waypoints, std::size_t>> plans;
    for (std::size_t t = 0; t < ep->plannable_ticks(); ++t) {
      switch (policy) {
        case Policy::model: {
          const auto features = planner::features_tensor(ep->observation_features[t]);
          const auto set = model->planner.decode_trajectories(model->planner.encode_scene(features), ep->commands[t]);
          const std::size_t n = planner::select_output_index(set);
          plans.emplace_back(planner::to_waypoints(set.waypoints[n]), n);
          break;
        }
        case Policy::expert: plans.emplace_back(ep->expert_trajectory[t], 0); break;
        case Policy::constant_velocity: plans.emplace_back(constant_velocity_plan(*ep, t), 0); break;
      }
    }
    report.episode_latency_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());

    for (std::size_t t = 0; t < plans.size(); ++t) {
      const PlannedRun run{plans[t].first, ep, t};
      const L2Metrics l2 = l2_displacement(run.plan, ep->expert_trajectory[t]);
      for (std::size_t h = 0; h < kHorizonCount; ++h) l2_rows[h].push_back(l2.l2_at[h]);
      report.records.push_back({ep->id, t, plans[t].second, l2.step_errors, score_run(run)});
      runs.push_back(run);
    }
  }
  if (runs.empty()) throw ContractError("evaluate: no plannable ticks in the selected episodes");
  report.runs = runs.size();
  for (std::size_t h = 0; h < kHorizonCount; ++h) report.metrics.l2_at[h] = mean(l2_rows[h]);
  report.metrics.l2_avg = mean(report.metrics.l2_at);
  const CollisionRates cr = collision_rate(runs);
  report.metrics.cr_at = cr.cr_at;
  report.metrics.cr_avg = cr.cr_avg;
  std::vector<RunScores> scores;
  for (const RunRecord& r : report.records) scores.push_back(r.scores);
  report.subscores = aggregate_subscores(scores);
  report.pdms = eval::pdms(report.subscores);
  return report;
}

void write_report(const EvalReport& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream(out_dir + "/report.json") << report.to_json().dump(2) << '\n';
  std::ofstream(out_dir + "/runs.csv") << report.csv();
}

// Ablations --------------------------------------------------------------

SweepSpec SweepSpec::preset(std::string_view name) {
  SweepSpec spec;
  spec.name = std::string(name);
  if (name == "steps") {
    for (int k : {1, 3, 5, 10}) spec.variants.push_back({"K=" + std::to_string(k), {"flow.K=" + std::to_string(k)}});
  } else if (name == "selection") {
    spec.variants = {
        {"none", {"selection.lambda_rec=0", "selection.lambda_theta=0", "loss.lambda_score=0"}},
        {"l2_only", {"selection.lambda_rec=0", "selection.lambda_theta=0"}},
        {"recons", {"selection.lambda_theta=0"}},
        {"full", {}},
    };
  } else if (name == "world") {
    spec.variants = {{"static", {"flow.kind=static"}}, {"flow", {}}};
  } else {
    throw VocabularyError("unknown sweep '" + std::string(name) + "' (expected steps, selection or world)");
  }
  return spec;
}

SweepSpec SweepSpec::from_json(const json& doc) {
  try {
    SweepSpec spec;
    spec.name = doc.value("name", std::string("custom"));
    if (doc.contains("seeds")) spec.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& v : doc.at("variants")) {
      Variant variant{v.at("name").get<std::string>(), {}};
      if (v.contains("overrides")) variant.overrides = v.at("overrides").get<std::vector<std::string>>();
      if (v.contains("set")) {
        for (const auto& [key, value] : v.at("set").items()) {
          variant.overrides.push_back(key + "=" + (value.is_string() ? value.get<std::string>() : value.dump()));
        }
      }
      spec.variants.push_back(std::move(variant));
    }
    if (spec.variants.empty()) throw LoadError("sweep spec has no variants");
    if (spec.seeds.empty()) throw LoadError("sweep spec has no seeds");
    return spec;
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed sweep spec: ") + e.what());
  }
}

json SweepSpec::to_json() const {
  json variants_json = json::array();
  for (const Variant& v : variants) variants_json.push_back({{"name", v.name}, {"overrides", v.overrides}});
  return {{"name", name}, {"seeds", seeds}, {"variants", variants_json}};
}

Stat summarize(std::span<const double> values) {
  Stat s;
  if (values.empty()) return s;
  s.mean = mean(values);
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

Stat VariantResult::stat(const std::string& metric) const {
  std::vector<double> values;
  for (const SeedResult& r : seeds) {
    const json& m = r.report.at("metrics");
    if (metric == "l2_avg" || metric == "cr_avg") {
      values.push_back(m.at(metric).get<double>());
    } else if (metric.rfind("l2_", 0) == 0) {
      values.push_back(m.at("l2").at(metric.substr(3)).get<double>());
    } else if (metric.rfind("cr_", 0) == 0) {
      values.push_back(m.at("cr").at(metric.substr(3)).get<double>());
    } else if (metric == "pdms") {
      values.push_back(r.report.at("pdms").get<double>());
    } else {
      throw VocabularyError("unknown metric '" + metric + "'");
    }
  }
  return summarize(values);
}

const VariantResult& AblationReport::variant(std::string_view name) const {
  for (const auto& v : variants)
    if (v.variant.name == name) return v;
  throw BoundsError("no variant named '" + std::string(name) + "'");
}

json AblationReport::to_json() const {
  static const char* kMetrics[] = {"l2_1s", "l2_2s", "l2_3s", "l2_avg", "cr_1s", "cr_2s", "cr_3s", "cr_avg", "pdms"};
  json out = {{"sweep", sweep}, {"seeds", seeds}, {"variants", json::array()}};
  for (const VariantResult& v : variants) {
    json entry = {{"name", v.variant.name}, {"overrides", v.variant.overrides}, {"runs", json::array()},
                  {"errors", v.errors}, {"summary", json::object()}};
    for (const SeedResult& r : v.seeds) {
      entry["runs"].push_back({{"seed", r.seed},
                               {"report", r.report},
                               {"checkpoint_hash", r.checkpoint_hash},
                               {"flow_loss_drop", r.flow_loss_drop},
                               {"val_score_agreement", r.val_score_agreement}});
    }
    if (!v.seeds.empty()) {
      for (const char* m : kMetrics) {
        const Stat s = v.stat(m);
        entry["summary"][m] = {{"mean", s.mean}, {"std", s.std}};
      }
    }
    out["variants"].push_back(std::move(entry));
  }
  return out;
}

std::string AblationReport::table() const {
  const std::vector<std::pair<std::string, std::string>> columns = {
      {"L2 1s (m)", "l2_1s"}, {"L2 2s (m)", "l2_2s"}, {"L2 3s (m)", "l2_3s"}, {"L2 avg (m)", "l2_avg"},
      {"CR 1s (%)", "cr_1s"}, {"CR 2s (%)", "cr_2s"}, {"CR 3s (%)", "cr_3s"}, {"CR avg (%)", "cr_avg"},
      {"PDMS", "pdms"}};
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Variant"};
  for (const auto& c : columns) header.push_back(c.first);
  rows.push_back(header);
  for (const VariantResult& v : variants) {
    std::vector<std::string> row{v.variant.name};
    for (const auto& c : columns) {
      row.push_back(v.seeds.empty() ? "failed" : format_stat(v.stat(c.second), c.second == "pdms" ? 3 : 2));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], display_width(row[i]));
  std::ostringstream out;
  out << "Sweep: " << sweep << " (" << seeds.size() << " seeds, mean ± std)\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      const std::string& cell = rows[r][i];
      const std::string pad(widths[i] - display_width(cell), ' ');
      out << (i == 0 ? cell + pad : "  " + pad + cell);
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : widths) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  for (const VariantResult& v : variants)
    for (const std::string& e : v.errors) out << "! " << v.variant.name << ": " << e << '\n';
  return out.str();
}

std::string AblationReport::csv() const {
  std::ostringstream out;
  out << std::setprecision(17) << "variant,seed,l2_1s,l2_2s,l2_3s,l2_avg,cr_1s,cr_2s,cr_3s,cr_avg,pdms\n";
  for (const VariantResult& v : variants) {
    for (const SeedResult& r : v.seeds) {
      const json& m = r.report.at("metrics");
      out << v.variant.name << ',' << r.seed;
      for (const char* h : kHorizonNames) out << ',' << m.at("l2").at(h).get<double>();
      out << ',' << m.at("l2_avg").get<double>();
      for (const char* h : kHorizonNames) out << ',' << m.at("cr").at(h).get<double>();
      out << ',' << m.at("cr_avg").get<double>() << ',' << r.report.at("pdms").get<double>() << '\n';
    }
  }
  return out.str();
}

AblationReport run_ablation(const RunConfig& base, const SweepSpec& spec, const std::vector<sim::Episode>& dataset,
                            const AblationOptions& options) {
  if (spec.variants.empty()) throw ContractError("run_ablation: sweep has no variants");
  if (spec.seeds.empty()) throw ContractError("run_ablation: sweep has no seeds");
  const auto episodes = sim::select_split(dataset, options.split);
  AblationReport report;
  report.sweep = spec.name;
  report.seeds = spec.seeds;
  for (const Variant& variant : spec.variants) {
    VariantResult result{variant, {}, {}};
    for (const std::uint64_t seed : spec.seeds) {
      try {
        RunConfig config = base;
        for (const std::string& o : variant.overrides) config.apply_override(o);
        config.seed = seed;
        const TrainResult trained = train(config, dataset);
        const EvalReport eval_report = evaluate(trained.model.get(), episodes);
        result.seeds.push_back({seed, eval_report.to_json(), trained.checkpoint.content_hash(),
                                trained.final_metrics.value("flow_loss_drop", 0.0),
                                trained.final_metrics.at("val_score_agreement").get<double>()});
        if (options.progress != nullptr) {
          *options.progress << spec.name << " " << variant.name << " seed " << seed
                            << ": l2_avg=" << eval_report.metrics.l2_avg << " cr_avg=" << eval_report.metrics.cr_avg
                            << std::endl;
        }
      } catch (const std::exception& e) {
        result.errors.push_back("seed " + std::to_string(seed) + ": " + e.what());
        if (options.progress != nullptr) {
          *options.progress << spec.name << " " << variant.name << " seed " << seed << " failed: " << e.what()
                            << std::endl;
        }
      }
    }
    report.variants.push_back(std::move(result));
  }
  return report;
}

std::vector<DirectionalCheck> directional_checks(const AblationReport& report) {
  struct Rule {
    const char* sweep;
    const char* name;
    const char* lhs;
    const char* rhs;
    const char* metric;
  };
  static const Rule kRules[] = {
      {"steps", "integration steps: l2_avg(K=5) <= l2_avg(K=1)", "K=5", "K=1", "l2_avg"},
      {"selection", "selection: cr_avg(full) <= cr_avg(l2_only)", "full", "l2_only", "cr_avg"},
      {"world", "world model: l2_avg(flow) <= l2_avg(static)", "flow", "static", "l2_avg"},
  };
  std::vector<DirectionalCheck> out;
  for (const Rule& rule : kRules) {
    if (report.sweep != rule.sweep) continue;
    DirectionalCheck check{rule.name, rule.lhs, rule.rhs, rule.metric};
    try {
      const VariantResult& lhs = report.variant(rule.lhs);
      const VariantResult& rhs = report.variant(rule.rhs);
      if (!lhs.seeds.empty() && !rhs.seeds.empty() && lhs.errors.empty() && rhs.errors.empty()) {
        check.lhs_value = lhs.stat(rule.metric).mean;
        check.rhs_value = rhs.stat(rule.metric).mean;
        check.passed = check.lhs_value <= check.rhs_value;
      }
    } catch (const BoundsError&) {
      check.passed = false;
    }
    out.push_back(check);
  }
  return out;
}

}  // namespace flowplan::eval
