// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>

#include "flowplan/checkpoint.hpp"
#include "flowplan/config.hpp"
#include "flowplan/error.hpp"
#include "flowplan/eval.hpp"
#include "flowplan/hash.hpp"
#include "flowplan/sim.hpp"
#include "flowplan/stability.hpp"
#include "flowplan/trainer.hpp"

#ifndef FLOWPLAN_VERSION
#define FLOWPLAN_VERSION "0.0.0"
#endif

namespace flowplan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  // gen-data
  std::uint64_t seed = 7;
  std::size_t episodes = 200;
  std::string scenario = "mixed";
  std::size_t ticks = 16;
  // shared
  std::string out;
  std::string config;
  std::vector<std::string> sets;
  std::string dataset;
  std::string manifest;
  bool quiet = false;
  bool assert_mode = false;
  // train
  std::string dump_selection;
  // evaluate / inspect-flow
  std::string checkpoint;
  std::string split = "test";
  std::string policy = "model";
  // ablate
  std::string sweep = "selection";
  std::vector<std::uint64_t> seeds;
  // inspect-flow
  std::string episode = "0";
  std::size_t tick = 0;
  int mode = -1;
};

class AssertionFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string output_root() {
  const char* env = std::getenv("FLOWPLAN_OUT");
  return env != nullptr && *env != '\0' ? env : "out";
}

std::string or_default(const std::string& value, const std::string& fallback) {
  return value.empty() ? output_root() + "/" + fallback : value;
}

void write_json(const std::string& path, const json& doc) {
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path);
  out << doc.dump(2) << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path);
  out << text;
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw LoadError(path + " is not valid JSON: " + e.what());
  }
}

std::string dataset_hash(const std::string& path) { return git_blob_hash(read_file(path)); }

json manifest_base(const std::string& verb) {
  return {{"tool", "flowplan"}, {"version", FLOWPLAN_VERSION}, {"verb", verb}};
}

/// Config from (in order) a manifest, a config file or the defaults, then
/// --set overrides and --dataset.
RunConfig resolve_config(const Options& o, json& manifest) {
  RunConfig config;
  if (!o.manifest.empty()) {
    const json source = read_json(o.manifest);
    if (!source.contains("config")) throw LoadError("manifest " + o.manifest + " has no config snapshot");
    config = RunConfig::from_json(source.at("config"));
    manifest["reproduces"] = o.manifest;
    if (source.contains("dataset_hash")) manifest["expected_dataset_hash"] = source.at("dataset_hash");
  } else if (!o.config.empty()) {
    config = RunConfig::load(o.config);
    manifest["config_file"] = o.config;
  }
  for (const std::string& s : o.sets) config.apply_override(s);
  if (!o.dataset.empty()) config.dataset = o.dataset;
  manifest["overrides"] = o.sets;
  return config;
}

std::vector<sim::Episode> load_dataset(const std::string& path, json& manifest) {
  if (path.empty()) throw LoadError("no dataset: pass --dataset or set data.dataset in the config");
  const std::string hash = dataset_hash(path);
  if (manifest.contains("expected_dataset_hash") && manifest.at("expected_dataset_hash").get<std::string>() != hash) {
    throw LoadError("dataset " + path + " does not match the manifest (hash " + hash + ")");
  }
  manifest["dataset"] = path;
  manifest["dataset_hash"] = hash;
  return sim::read_dataset(path);
}

std::string checkpoint_path(const std::string& path) {
  if (path.empty()) throw LoadError("--checkpoint is required");
  return fs::is_directory(path) ? path + "/checkpoint.json" : path;
}

// Verbs ------------------------------------------------------------------

int run_gen_data(const Options& o, std::ostream& out) {
  sim::ScenarioConfig scenario = sim::ScenarioConfig::by_name(o.scenario);
  scenario.ticks = o.ticks;
  const std::string path = or_default(o.out, "data/dataset.jsonl");
  const auto episodes = sim::generate_dataset(o.seed, o.episodes, scenario);
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  sim::write_dataset(path, episodes);
  json manifest = manifest_base("gen-data");
  manifest["seed"] = o.seed;
  manifest["episodes"] = o.episodes;
  manifest["scenario"] = o.scenario;
  manifest["ticks"] = o.ticks;
  manifest["dataset"] = path;
  manifest["dataset_hash"] = dataset_hash(path);
  write_json(path + ".manifest.json", manifest);
  out << "wrote " << episodes.size() << " episodes to " << path << " (" << manifest["dataset_hash"].get<std::string>()
      << ")\n";
  return kExitOk;
}

int run_train(const Options& o, std::ostream& out) {
  json manifest = manifest_base("train");
  const RunConfig config = resolve_config(o, manifest);
  const auto dataset = load_dataset(config.dataset, manifest);
  const std::string dir = or_default(o.out, "train");
  fs::create_directories(dir);

  std::ofstream dump;
  TrainOptions options;
  options.out_dir = dir;
  if (!o.quiet) options.progress = &out;
  if (!o.dump_selection.empty()) {
    dump.open(o.dump_selection);
    if (!dump) throw LoadError("cannot write " + o.dump_selection);
    options.selection_dump = &dump;
  }
  const TrainResult result = train(config, dataset, options);

  manifest["config"] = config.to_json();
  manifest["seed"] = config.seed;
  manifest["checkpoint"] = dir + "/checkpoint.json";
  manifest["checkpoint_hash"] = result.checkpoint.content_hash();
  manifest["final_metrics"] = result.final_metrics;
  write_json(dir + "/manifest.json", manifest);
  out << result.final_metrics.dump(2) << '\n';
  return kExitOk;
}

int run_evaluate(const Options& o, std::ostream& out) {
  json manifest = manifest_base("evaluate");
  const eval::Policy policy = eval::policy_from_string(o.policy);
  std::unique_ptr<Model> model;
  std::string dataset_path = o.dataset;
  if (policy == eval::Policy::model || !o.checkpoint.empty()) {
    const Checkpoint ck = Checkpoint::load(checkpoint_path(o.checkpoint));
    model = Model::from_checkpoint(ck);
    manifest["checkpoint"] = checkpoint_path(o.checkpoint);
    manifest["checkpoint_hash"] = ck.content_hash();
    manifest["config"] = model->config.to_json();
    if (dataset_path.empty()) dataset_path = model->config.dataset;
  }
  const auto dataset = load_dataset(dataset_path, manifest);
  const auto split = sim::split_from_string(o.split);
  const auto episodes = sim::select_split(dataset, split);

  world::reset_velocity_invocations();
  const eval::EvalReport report = eval::evaluate(model.get(), episodes, policy);
  const std::uint64_t flow_calls = world::velocity_invocations();

  const std::string dir = or_default(o.out, "evaluate");
  eval::write_report(report, dir);
  manifest["split"] = o.split;
  manifest["policy"] = o.policy;
  manifest["report"] = report.to_json();
  manifest["flow_invocations"] = flow_calls;
  write_json(dir + "/manifest.json", manifest);
  out << report.to_json().dump(2) << '\n';
  if (o.assert_mode && flow_calls != 0) {
    throw AssertionFailure("evaluate invoked the flow model " + std::to_string(flow_calls) + " times");
  }
  if (o.assert_mode) out << "PASS evaluate: flow model invocations = 0\n";
  return kExitOk;
}

int run_ablate(const Options& o, std::ostream& out) {
  json manifest = manifest_base("ablate");
  const RunConfig base = resolve_config(o, manifest);
  const auto dataset = load_dataset(base.dataset, manifest);
  eval::SweepSpec spec = o.sweep.ends_with(".json") ? eval::SweepSpec::from_json(read_json(o.sweep))
                                                    : eval::SweepSpec::preset(o.sweep);
  if (!o.seeds.empty()) spec.seeds = o.seeds;

  eval::AblationOptions options;
  options.split = sim::split_from_string(o.split);
  if (!o.quiet) options.progress = &out;
  const eval::AblationReport report = eval::run_ablation(base, spec, dataset, options);

  const std::string dir = or_default(o.out, "ablate/" + spec.name);
  fs::create_directories(dir);
  write_json(dir + "/ablation.json", report.to_json());
  write_text(dir + "/ablation.txt", report.table());
  write_text(dir + "/ablation.csv", report.csv());
  manifest["config"] = base.to_json();
  manifest["seed"] = base.seed;
  manifest["sweep"] = spec.to_json();
  manifest["split"] = o.split;
  write_json(dir + "/manifest.json", manifest);
  out << report.table();

  bool failed = false;
  for (const auto& check : eval::directional_checks(report)) {
    out << (check.passed ? "PASS " : "FAIL ") << check.name << " (" << check.lhs_value << " vs " << check.rhs_value
        << ")\n";
    failed = failed || !check.passed;
  }
  if (o.assert_mode && failed) throw AssertionFailure("a directional ablation check failed");
  return kExitOk;
}

const sim::Episode& find_episode(const std::vector<sim::Episode>& dataset, const std::string& key) {
  for (const auto& ep : dataset)
    if (ep.id == key) return ep;
  std::size_t index = 0;
  try {
    std::size_t used = 0;
    index = std::stoul(key, &used);
    if (used != key.size()) throw std::invalid_argument(key);
  } catch (const std::exception&) {
    throw BoundsError("no episode with id '" + key + "'");
  }
  if (index >= dataset.size()) throw BoundsError("episode index " + key + " out of range");
  return dataset[index];
}

int run_inspect_flow(const Options& o, std::ostream& out) {
  json manifest = manifest_base("inspect-flow");
  const Checkpoint ck = Checkpoint::load(checkpoint_path(o.checkpoint));
  const auto model = Model::from_checkpoint(ck);
  const auto dataset = load_dataset(o.dataset.empty() ? model->config.dataset : o.dataset, manifest);
  const sim::Episode& ep = find_episode(dataset, o.episode);

  ad::NoGradGuard no_grad;
  const SampleForward f = forward_sample(*model, ep, o.tick);
  const auto assessment =
      selection::assess_modes(f.set, f.z_t, f.z_next, f.gt, model->world, model->config.selection);
  if (o.mode >= 0 && static_cast<std::size_t>(o.mode) >= f.set.size()) {
    throw BoundsError("mode " + std::to_string(o.mode) + " out of range");
  }

  json modes = json::array();
  for (std::size_t n = 0; n < f.set.size(); ++n) {
    if (o.mode >= 0 && n != static_cast<std::size_t>(o.mode)) continue;
    const auto& velocities = assessment.rollouts[n].velocities.velocities;
    json norms = json::array(), angles = json::array();
    for (std::size_t k = 0; k < velocities.size(); ++k) {
      const auto v = velocities[k].data();
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norms.push_back(std::sqrt(norm));
      if (k > 0) {
        const std::vector<std::vector<double>> pair{
            {velocities[k - 1].data().begin(), velocities[k - 1].data().end()}, {v.begin(), v.end()}};
        angles.push_back(selection::stability_score(pair));
      }
    }
    const auto& m = assessment.modes[n];
    modes.push_back({{"mode", n},
                     {"logit", f.set.logits.data()[n]},
                     {"velocity_norms", norms},
                     {"angles", angles},
                     {"stability", m.stability},
                     {"traj_err", m.traj_err},
                     {"rec_err", m.rec_err},
                     {"criterion", m.criterion}});
  }
  const json doc = {{"episode", ep.id},
                    {"tick", o.tick},
                    {"command", sim::to_string(ep.commands[o.tick])},
                    {"K", model->config.world.integration_steps},
                    {"n_star", assessment.best},
                    {"selected", planner::select_output_index(f.set)},
                    {"modes", modes}};
  if (o.out.empty()) {
    out << doc.dump(2) << '\n';
  } else {
    write_json(o.out, doc);
    out << "wrote " << o.out << '\n';
  }
  return kExitOk;
}

// Parser -----------------------------------------------------------------

struct Parser {
  CLI::App app{"flowplan: trajectory planning with a flow-matching latent world model", "flowplan"};
  Options opts;
  CLI::App* gen = nullptr;
  CLI::App* train = nullptr;
  CLI::App* evaluate = nullptr;
  CLI::App* ablate = nullptr;
  CLI::App* inspect = nullptr;

  Parser() {
    app.require_subcommand(1);
    app.set_version_flag("--version", FLOWPLAN_VERSION);

    gen = app.add_subcommand("gen-data", "Generate a toy driving dataset (JSONL, one episode per line)");
    gen->add_option("--seed", opts.seed, "Base seed; episode seeds derive from it")->capture_default_str();
    gen->add_option("--episodes", opts.episodes, "Number of episodes")->capture_default_str();
    gen->add_option("--scenario", opts.scenario, "Scenario: mixed, empty or lead_braking")->capture_default_str();
    gen->add_option("--ticks", opts.ticks, "Ticks per episode")->capture_default_str();
    gen->add_option("--out", opts.out, "Dataset path (default $FLOWPLAN_OUT/data/dataset.jsonl)");

    train = app.add_subcommand("train", "Train planner and world model; writes checkpoint, metrics and manifest");
    add_config_options(train);
    train->add_option("--manifest", opts.manifest, "Rerun from a manifest's config snapshot")
        ->check(CLI::ExistingFile);
    train->add_option("--out", opts.out, "Run directory (default $FLOWPLAN_OUT/train)");
    train->add_option("--dump-selection", opts.dump_selection, "Write per-batch mode assessments (JSONL) here");
    train->add_flag("--quiet", opts.quiet, "Suppress per-epoch progress");

    evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint or a baseline policy on a dataset split");
    evaluate->add_option("--checkpoint", opts.checkpoint, "Checkpoint file or run directory");
    evaluate->add_option("--dataset", opts.dataset, "Dataset path (default: the one recorded in the checkpoint)");
    evaluate->add_option("--split", opts.split, "train, val or test")->capture_default_str();
    evaluate->add_option("--policy", opts.policy, "model, expert or constant_velocity")->capture_default_str();
    evaluate->add_option("--out", opts.out, "Report directory (default $FLOWPLAN_OUT/evaluate)");
    evaluate->add_flag("--assert", opts.assert_mode, "Exit 1 if the flow model was invoked during evaluation");

    ablate = app.add_subcommand("ablate", "Train and evaluate a sweep of config variants over several seeds");
    add_config_options(ablate);
    ablate->add_option("--sweep", opts.sweep, "Preset (steps, selection, world) or a sweep JSON file")
        ->capture_default_str();
    ablate->add_option("--seeds", opts.seeds, "Comma-separated seeds (default 1,2,3,4,5)")->delimiter(',');
    ablate->add_option("--split", opts.split, "Evaluation split")->capture_default_str();
    ablate->add_option("--out", opts.out, "Report directory (default $FLOWPLAN_OUT/ablate/<sweep>)");
    ablate->add_flag("--assert", opts.assert_mode, "Exit 1 if a directional check fails");
    ablate->add_flag("--quiet", opts.quiet, "Suppress per-run progress");

    inspect = app.add_subcommand("inspect-flow", "Dump per-step velocity norms and angles for one episode tick");
    inspect->add_option("--checkpoint", opts.checkpoint, "Checkpoint file or run directory")->required();
    inspect->add_option("--dataset", opts.dataset, "Dataset path (default: the one recorded in the checkpoint)");
    inspect->add_option("--episode", opts.episode, "Episode id or index")->capture_default_str();
    inspect->add_option("--tick", opts.tick, "Tick within the episode")->capture_default_str();
    inspect->add_option("--mode", opts.mode, "Mode index, -1 for all")->capture_default_str();
    inspect->add_option("--out", opts.out, "JSON output path (default: stdout)");
  }

  void add_config_options(CLI::App* sub) {
    sub->add_option("--config", opts.config, "Run config (.json or TOML-style key = value)")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", opts.sets, "Override a config key, e.g. --set flow.K=5 (repeatable)")
        ->allow_extra_args(false);
    sub->add_option("--dataset", opts.dataset, "Dataset path (overrides data.dataset)");
  }

  std::vector<CLI::App*> subcommands() const { return {gen, train, evaluate, ablate, inspect}; }
};

json error_json(const std::string& kind, const std::string& message) { return {{"error", kind}, {"message", message}}; }

}  // namespace

std::vector<std::string> verbs() { return {"gen-data", "train", "evaluate", "ablate", "inspect-flow"}; }

std::vector<std::string> options_of(const std::string& verb) {
  Parser parser;
  std::vector<std::string> out;
  for (CLI::App* sub : parser.subcommands()) {
    if (sub->get_name() != verb) continue;
    for (const CLI::Option* opt : sub->get_options()) {
      for (const std::string& name : opt->get_lnames()) out.push_back("--" + name);
    }
    return out;
  }
  throw VocabularyError("unknown verb '" + verb + "'");
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Parser parser;
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    parser.app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    CLI::App* target = &parser.app;
    for (CLI::App* sub : parser.subcommands())
      if (sub->parsed()) target = sub;
    out << target->help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << FLOWPLAN_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    CLI::App* target = &parser.app;
    for (CLI::App* sub : parser.subcommands())
      if (sub->parsed()) target = sub;
    err << error_json("usage", e.what()).dump() << '\n' << target->help();
    return kExitUsage;
  }

  try {
    if (parser.gen->parsed()) return run_gen_data(parser.opts, out);
    if (parser.train->parsed()) return run_train(parser.opts, out);
    if (parser.evaluate->parsed()) return run_evaluate(parser.opts, out);
    if (parser.ablate->parsed()) return run_ablate(parser.opts, out);
    if (parser.inspect->parsed()) return run_inspect_flow(parser.opts, out);
  } catch (const AssertionFailure& e) {
    err << error_json("assertion", e.what()).dump() << '\n';
    return kExitAssertion;
  } catch (const TrainingAbort& e) {
    err << json{{"error", "training_abort"}, {"component", e.component()}, {"message", e.what()}}.dump() << '\n';
    return kExitFailure;
  } catch (const LoadError& e) {
    err << error_json("load", e.what()).dump() << '\n';
    return kExitFailure;
  } catch (const GenerationError& e) {
    err << json{{"error", "generation"}, {"seed", e.seed()}, {"message", e.what()}}.dump() << '\n';
    return kExitFailure;
  } catch (const VocabularyError& e) {
    err << error_json("vocabulary", e.what()).dump() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << error_json("shape", e.what()).dump() << '\n';
    return kExitFailure;
  } catch (const BoundsError& e) {
    err << error_json("bounds", e.what()).dump() << '\n';
    return kExitFailure;
  } catch (const ContractError& e) {
    err << error_json("contract", e.what()).dump() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << error_json("internal", e.what()).dump() << '\n';
    return kExitFailure;
  }
  err << error_json("usage", "no verb given").dump() << '\n' << parser.app.help();
  return kExitUsage;
}

}  // namespace flowplan::cli
