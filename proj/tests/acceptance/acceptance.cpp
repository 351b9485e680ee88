// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion; exits 1 if any
// fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "fixtures.hpp"
#include "flowplan/eval.hpp"
#include "flowplan/hash.hpp"
#include "flowplan/ops.hpp"
#include "flowplan/stability.hpp"
#include "flowplan/trainer.hpp"
#include "flowplan/world_model.hpp"
#include "gradcheck.hpp"

namespace fp = flowplan;
using fp::ad::Tensor;
using nlohmann::json;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

// Shared state for the training-based criteria -----------------------------

struct Workspace {
  std::string root;
  std::string dataset_path;
  std::vector<fp::sim::Episode> dataset;
  std::string reference_run;  // run directory of the first reference training
  double reference_seconds = 0.0;
};

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = fp::cli::dispatch(args, o, e);
  if (code != fp::cli::kExitOk) std::cerr << e.str();
  if (out != nullptr) *out = o.str();
  return code;
}

Workspace& workspace() {
  static std::optional<Workspace> ws;
  if (!ws) {
    ws.emplace();
    const char* env = std::getenv("FLOWPLAN_ACCEPTANCE_OUT");
    ws->root = env != nullptr ? std::string(env) : fp::testing::temp_dir("acceptance");
    std::filesystem::create_directories(ws->root);
    ws->dataset_path = ws->root + "/data.jsonl";
    if (run_cli({"gen-data", "--seed", "7", "--episodes", "200", "--out", ws->dataset_path}) != 0) {
      throw std::runtime_error("gen-data failed");
    }
    ws->dataset = fp::sim::read_dataset(ws->dataset_path);
  }
  return *ws;
}

std::string reference_config() { return std::string(FLOWPLAN_CONFIG_DIR) + "/reference.toml"; }

json read_json(const std::string& path) { return json::parse(fp::read_file(path)); }

// Runs the reference training once through the CLI; later criteria reuse it.
const std::string& reference_run() {
  Workspace& ws = workspace();
  if (ws.reference_run.empty()) {
    const std::string dir = ws.root + "/reference_a";
    const auto start = Clock::now();
    if (run_cli({"train", "--config", reference_config(), "--dataset", ws.dataset_path, "--out", dir, "--quiet"}) != 0) {
      throw std::runtime_error("reference training failed");
    }
    ws.reference_seconds = seconds_since(start);
    ws.reference_run = dir;
  }
  return ws.reference_run;
}

// Criteria -----------------------------------------------------------------

Outcome gradient_suite() {
  const auto start = Clock::now();
  const auto cases = fp::testing::run_gradient_suite(6);
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  std::string worst_name;
  std::size_t entries = 0;
  for (const auto& c : cases) {
    entries += c.checked;
    if (!(c.rel_error <= worst)) {
      worst = c.rel_error;
      worst_name = c.name;
    }
  }
  const bool ok = cases.size() >= 100 && worst <= 1e-4 && elapsed < 60.0;
  return {ok, std::to_string(cases.size()) + " cases, " + std::to_string(entries) + " entries, max rel err " +
                  fmt(worst, 3) + " (" + worst_name + "), " + fmt(elapsed, 3) + " s"};
}

Outcome flow_endpoints() {
  fp::Rng rng(2026);
  std::size_t checks = 0;
  bool ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const fp::ad::Shape shape{1 + rng.index(6), 1 + rng.index(33)};
    const Tensor z = fp::testing::random_tensor(shape, rng, rng.uniform(0.1, 10.0));
    const Tensor z_next = fp::testing::random_tensor(shape, rng, rng.uniform(0.1, 10.0));
    const std::uint64_t seed = rng.next_u64();
    const auto clean = fp::world::make_anchor({z, 0}, 0.0, seed);
    const auto noisy = fp::world::make_anchor({z, 0}, 1.0, seed);
    ok = ok && bit_equal(clean.a, z) && bit_equal(noisy.a, noisy.noise);
    const auto anchor = fp::world::make_anchor({z, 0}, rng.uniform(), seed);
    for (auto conv : {fp::world::TargetConvention::paper_literal, fp::world::TargetConvention::path_derivative}) {
      ok = ok && bit_equal(fp::world::interpolate(anchor, {z_next, 1}, 0.0, conv).x_s, anchor.a);
      ok = ok && bit_equal(fp::world::interpolate(anchor, {z_next, 1}, 1.0, conv).x_s, z_next);
    }
    checks += 6;
  }
  return {ok, std::to_string(checks) + " bit-exact endpoint comparisons"};
}

Outcome euler_order() {
  // dz/ds = 0.5 z on s in [0, 1]; exact z(1) = z0 * e^0.5.
  const Tensor z0 = Tensor::from({2, 3}, {1.0, -2.0, 0.5, 3.0, -0.25, 1.5});
  const fp::world::VelocityField field = [](const Tensor& x, double, const fp::world::ConditionEmbedding&) {
    return fp::ad::scale(x, 0.5);
  };
  const fp::world::ConditionEmbedding h{Tensor::zeros({1, 1})};
  std::vector<double> errors;
  for (std::size_t k : {1u, 2u, 4u, 8u, 16u}) {
    const Tensor z = fp::world::euler_integrate({z0, 0}, h, k, field).prediction.z;
    double err = 0.0;
    for (std::size_t i = 0; i < z.numel(); ++i) err = std::max(err, std::abs(z.data()[i] - z0.data()[i] * std::exp(0.5)));
    errors.push_back(err);
  }
  bool ok = true;
  std::string ratios;
  for (std::size_t i = 1; i < errors.size(); ++i) {
    const double r = errors[i - 1] / errors[i];
    ok = ok && r >= 1.6 && r <= 2.4;
    ratios += (i > 1 ? ", " : "") + fmt(r, 3);
  }
  return {ok, "error ratios per doubling of K: " + ratios};
}

Outcome stability_metric() {
  using Seq = std::vector<std::vector<double>>;
  fp::Rng rng(99);
  bool ok = true;
  double worst_collinear = 0.0, worst_scale = 0.0, orth_err = 0.0;
  std::size_t out_of_range = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.index(9), d = 1 + rng.index(16);
    Seq seq(k, std::vector<double>(d)), scaled(k, std::vector<double>(d)), collinear(k, std::vector<double>(d));
    std::vector<double> dir(d);
    for (double& x : dir) x = rng.normal();
    for (std::size_t i = 0; i < k; ++i) {
      const double c = std::exp(rng.uniform(-6.0, 6.0)), c2 = std::exp(rng.uniform(-6.0, 6.0));
      for (std::size_t j = 0; j < d; ++j) {
        seq[i][j] = rng.normal();
        scaled[i][j] = c * seq[i][j];
        collinear[i][j] = c2 * dir[j];
      }
    }
    const double s = fp::selection::stability_score(seq);
    if (!(s >= 0.0 && s <= std::numbers::pi)) ++out_of_range;
    worst_scale = std::max(worst_scale, std::abs(fp::selection::stability_score(scaled) - s));
    worst_collinear = std::max(worst_collinear, fp::selection::stability_score(collinear));
    const std::size_t a = rng.index(d);
    std::vector<double> e1(d, 0.0), e2(d, 0.0);
    if (d >= 2) {
      e1[a] = rng.uniform(0.1, 5.0);
      e2[(a + 1) % d] = -rng.uniform(0.1, 5.0);
      orth_err = std::max(orth_err, std::abs(fp::selection::stability_score(Seq{e1, e2}) - std::numbers::pi / 2));
    }
  }
  ok = out_of_range == 0 && worst_collinear <= 1e-12 && orth_err <= 1e-9 && worst_scale <= 1e-9;
  return {ok, "1000 sequences: out of [0, pi] " + std::to_string(out_of_range) + ", max collinear " +
                  fmt(worst_collinear, 3) + ", max |orthogonal - pi/2| " + fmt(orth_err, 3) + ", max rescale diff " +
                  fmt(worst_scale, 3)};
}

Outcome pdms_formula() {
  const double v = fp::eval::pdms({1.0, 1.0, 0.875, 1.0, 0.999});
  return {std::abs(v - 0.948) <= 0.0005, "PDMS(1, 1, 0.875, 1, 0.999) = " + fmt(v, 6) + " (target 0.948 +- 0.0005)"};
}

Outcome training_convergence() {
  const std::string& dir = reference_run();
  const json m = read_json(dir + "/final_metrics.json");
  const double drop = m.at("flow_loss_drop").get<double>();
  const double agree = m.at("val_score_agreement").get<double>();
  const double chance = m.at("chance").get<double>();
  const double minutes = workspace().reference_seconds / 60.0;
  const bool ok = drop >= 0.5 && agree - chance >= 0.15 && minutes < 20.0;
  return {ok, "flow loss " + fmt(m.at("flow_loss_first_epoch").get<double>()) + " -> " +
                  fmt(m.at("flow_loss_final_epoch").get<double>()) + " (drop " + fmt(100 * drop, 3) +
                  "%), val agreement " + fmt(agree, 3) + " vs chance " + fmt(chance, 3) + ", " + fmt(minutes, 3) +
                  " min"};
}

// 7-9 share one sweep over the variants they compare.
const fp::eval::AblationReport& ablation() {
  static std::optional<fp::eval::AblationReport> report;
  if (!report) {
    Workspace& ws = workspace();
    fp::RunConfig base = fp::RunConfig::load(reference_config());
    base.dataset = ws.dataset_path;
    fp::eval::SweepSpec spec;
    spec.name = "acceptance";
    spec.variants = {{"reference", {}},
                     {"k1", {"flow.K=1"}},
                     {"l2_only", {"selection.lambda_rec=0", "selection.lambda_theta=0"}},
                     {"static", {"flow.kind=static"}}};
    fp::eval::AblationOptions options;
    options.progress = &std::cerr;
    report = fp::eval::run_ablation(base, spec, ws.dataset, options);
    std::filesystem::create_directories(ws.root + "/ablation");
    std::ofstream(ws.root + "/ablation/ablation.json") << report->to_json().dump(2) << '\n';
    std::cout << report->table() << std::flush;
  }
  return *report;
}

Outcome directional(const std::string& lhs, const std::string& rhs, const std::string& metric) {
  const auto& r = ablation();
  const auto& a = r.variant(lhs);
  const auto& b = r.variant(rhs);
  if (!a.errors.empty() || !b.errors.empty() || a.seeds.size() != 5 || b.seeds.size() != 5) {
    return {false, "incomplete runs: " + std::to_string(a.seeds.size()) + " / " + std::to_string(b.seeds.size())};
  }
  const auto sa = a.stat(metric), sb = b.stat(metric);
  return {sa.mean <= sb.mean, "mean " + metric + " " + lhs + " " + fmt(sa.mean) + " +- " + fmt(sa.std, 2) +
                                  " vs " + rhs + " " + fmt(sb.mean) + " +- " + fmt(sb.std, 2) + " over 5 seeds"};
}

Outcome inference_contract() {
  const std::string& dir = reference_run();
  const fp::Checkpoint ck = fp::Checkpoint::load(dir + "/checkpoint.json");
  const auto test = fp::sim::select_split(workspace().dataset, fp::sim::Split::test);

  const auto model = fp::Model::from_checkpoint(ck);
  fp::world::reset_velocity_invocations();
  (void)fp::eval::evaluate(model.get(), test);
  const std::uint64_t calls = fp::world::velocity_invocations();

  // Same weights, different K; every episode is timed under each K back to
  // back so host speed changes hit all variants alike.
  const std::vector<std::size_t> ks{1, 5, 10};
  std::vector<std::unique_ptr<fp::Model>> models;
  for (std::size_t k : ks) {
    fp::Checkpoint variant = ck;
    variant.metadata["config"]["flow"]["K"] = k;
    models.push_back(fp::Model::from_checkpoint(variant));
  }
  std::map<std::size_t, std::vector<double>> latency;
  for (int rep = 0; rep < 31; ++rep) {
    for (const fp::sim::Episode* ep : test) {
      const std::vector<const fp::sim::Episode*> one{ep};
      for (std::size_t j = 0; j < ks.size(); ++j) {
        const std::size_t i = (j + static_cast<std::size_t>(rep)) % ks.size();
        latency[ks[i]].push_back(fp::eval::evaluate(models[i].get(), one).episode_latency_ms.front());
      }
    }
  }
  std::map<std::size_t, double> median;
  for (auto& [k, v] : latency) {
    std::sort(v.begin(), v.end());
    median[k] = v[v.size() / 2];
  }
  double worst = 0.0;
  std::string detail;
  for (std::size_t k : ks) {
    worst = std::max(worst, std::abs(median[k] / median[5] - 1.0));
    detail += " K=" + std::to_string(k) + ":" + fmt(median[k], 3) + "ms";
  }
  return {calls == 0 && worst <= 0.05, "flow invocations during evaluate " + std::to_string(calls) +
                                           ", median per-episode latency" + detail + ", max deviation " +
                                           fmt(100 * worst, 3) + "%"};
}

Outcome reproducibility() {
  Workspace& ws = workspace();
  const std::string& a = reference_run();
  const std::string b = ws.root + "/reference_b";
  if (run_cli({"train", "--manifest", a + "/manifest.json", "--out", b, "--quiet"}) != 0) {
    return {false, "rerun from manifest failed"};
  }
  for (const std::string& dir : {a, b}) {
    if (run_cli({"evaluate", "--checkpoint", dir, "--dataset", ws.dataset_path, "--out", dir + "/eval"}) != 0) {
      return {false, "evaluate failed for " + dir};
    }
  }
  const std::string ha = read_json(a + "/manifest.json").at("checkpoint_hash");
  const std::string hb = read_json(b + "/manifest.json").at("checkpoint_hash");
  const bool metrics_same = fp::read_file(a + "/final_metrics.json") == fp::read_file(b + "/final_metrics.json") &&
                            fp::read_file(a + "/metrics.jsonl") == fp::read_file(b + "/metrics.jsonl");
  const bool report_same = fp::read_file(a + "/eval/report.json") == fp::read_file(b + "/eval/report.json") &&
                           fp::read_file(a + "/eval/runs.csv") == fp::read_file(b + "/eval/runs.csv");
  return {ha == hb && metrics_same && report_same,
          "checkpoint " + ha.substr(0, 16) + (ha == hb ? " == " : " != ") + hb.substr(0, 16) + ", metrics " +
              (metrics_same ? "identical" : "differ") + ", report " + (report_same ? "identical" : "differ")};
}

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},
      {2, "flow endpoints", flow_endpoints},
      {3, "Euler solver order", euler_order},
      {4, "stability metric", stability_metric},
      {5, "PDMS formula", pdms_formula},
      {6, "training convergence", training_convergence},
      {11, "reproducibility", reproducibility},
      {10, "inference contract", inference_contract},
      {7, "ablation: integration steps", [] { return directional("reference", "k1", "l2_avg"); }},
      {8, "ablation: selection criteria", [] { return directional("reference", "l2_only", "cr_avg"); }},
      {9, "ablation: dynamic vs static world model", [] { return directional("reference", "static", "l2_avg"); }},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  std::map<int, std::string> lines;
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.passed ? 0 : 1;
    const std::string line = std::string(o.passed ? "PASS" : "FAIL") + " [" + std::to_string(c.id) + "] " + c.name +
                             ": " + o.detail;
    std::cout << line << std::endl;
    lines[c.id] = line;
  }
  std::cout << "\nSummary\n";
  for (const auto& [id, line] : lines) std::cout << line << '\n';
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
