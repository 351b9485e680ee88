// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/config.hpp"

#include <sstream>

#include "flowplan/error.hpp"
#include "flowplan/hash.hpp"

namespace flowplan {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

json parse_scalar(std::string_view text) {
  const std::string value = trim(text);
  try {
    return json::parse(value);
  } catch (const json::parse_error&) {
    return value;
  }
}

template <typename T>
void read(const json& section, const char* key, T& out) {
  if (section.contains(key)) out = section.at(key).get<T>();
}

void check_keys(const json& section, const std::string& name, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : section.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw LoadError("unknown config key '" + name + "." + key + "'");
  }
}

}  // namespace

void LossWeights::validate() const {
  if (lambda_score < 0.0 || lambda_rec < 0.0 || lambda_flow < 0.0) throw ContractError("loss weights must be >= 0");
}

json RunConfig::to_json() const {
  return {
      {"run",
       {{"seed", seed},
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"learning_rate", learning_rate},
        {"weight_decay", weight_decay},
        {"grad_clip", grad_clip},
        {"tick_stride", tick_stride}}},
      {"planner",
       {{"modes", planner.modes},
        {"queries", planner.queries},
        {"dim", planner.dim},
        {"depth", planner.depth},
        {"v_max", planner.v_max}}},
      {"flow",
       {{"K", world.integration_steps},
        {"kind", world::to_string(world.kind)},
        {"target_convention", world::to_string(world.target)},
        {"alpha_policy", world.alpha.sampled ? "uniform" : "fixed"},
        {"alpha_max", world.alpha.max_alpha},
        {"alpha", world.alpha.fixed_alpha},
        {"lambda_z", world.lambda_z},
        {"lambda_T", world.lambda_t},
        {"width", world.width},
        {"blocks", world.blocks},
        {"time_embed_dim", world.time_embed_dim},
        {"traj_embed_dim", world.traj_embed_dim}}},
      {"selection",
       {{"lambda_rec", selection.lambda_rec},
        {"lambda_traj", selection.lambda_traj},
        {"lambda_theta", selection.lambda_theta}}},
      {"loss",
       {{"lambda_score", loss.lambda_score},
        {"lambda_rec", loss.lambda_rec},
        {"lambda_flow", loss.lambda_flow},
        {"traj_supervision",
         trajectory_supervision == TrajectorySupervision::winner_take_all ? "winner" : "all"}}},
      {"data", {{"dataset", dataset}}},
  };
}

void RunConfig::apply(const json& doc) {
  try {
    for (const auto& [name, section] : doc.items()) {
      if (!section.is_object()) throw LoadError("config section '" + name + "' must be a table");
      if (name == "run") {
        check_keys(section, name, {"seed", "epochs", "batch_size", "learning_rate", "weight_decay", "grad_clip",
                                   "tick_stride"});
        read(section, "seed", seed);
        read(section, "epochs", epochs);
        read(section, "batch_size", batch_size);
        read(section, "learning_rate", learning_rate);
        read(section, "weight_decay", weight_decay);
        read(section, "grad_clip", grad_clip);
        read(section, "tick_stride", tick_stride);
      } else if (name == "planner") {
        check_keys(section, name, {"modes", "queries", "dim", "depth", "v_max"});
        read(section, "modes", planner.modes);
        read(section, "queries", planner.queries);
        read(section, "dim", planner.dim);
        read(section, "depth", planner.depth);
        read(section, "v_max", planner.v_max);
      } else if (name == "flow") {
        check_keys(section, name, {"K", "kind", "target_convention", "alpha_policy", "alpha_max", "alpha", "lambda_z",
                                   "lambda_T", "width", "blocks", "time_embed_dim", "traj_embed_dim"});
        read(section, "K", world.integration_steps);
        if (section.contains("kind")) world.kind = world::dynamics_kind_from_string(section.at("kind").get<std::string>());
        if (section.contains("target_convention")) {
          world.target = world::target_convention_from_string(section.at("target_convention").get<std::string>());
        }
        if (section.contains("alpha_policy")) {
          const auto policy = section.at("alpha_policy").get<std::string>();
          if (policy != "uniform" && policy != "fixed") throw LoadError("flow.alpha_policy must be uniform or fixed");
          world.alpha.sampled = policy == "uniform";
        }
        read(section, "alpha_max", world.alpha.max_alpha);
        read(section, "alpha", world.alpha.fixed_alpha);
        read(section, "lambda_z", world.lambda_z);
        read(section, "lambda_T", world.lambda_t);
        read(section, "width", world.width);
        read(section, "blocks", world.blocks);
        read(section, "time_embed_dim", world.time_embed_dim);
        read(section, "traj_embed_dim", world.traj_embed_dim);
      } else if (name == "selection") {
        check_keys(section, name, {"lambda_rec", "lambda_traj", "lambda_theta"});
        read(section, "lambda_rec", selection.lambda_rec);
        read(section, "lambda_traj", selection.lambda_traj);
        read(section, "lambda_theta", selection.lambda_theta);
      } else if (name == "loss") {
        check_keys(section, name, {"lambda_score", "lambda_rec", "lambda_flow", "traj_supervision"});
        read(section, "lambda_score", loss.lambda_score);
        read(section, "lambda_rec", loss.lambda_rec);
        read(section, "lambda_flow", loss.lambda_flow);
        if (section.contains("traj_supervision")) {
          const auto mode = section.at("traj_supervision").get<std::string>();
          if (mode == "winner") {
            trajectory_supervision = TrajectorySupervision::winner_take_all;
          } else if (mode == "all") {
            trajectory_supervision = TrajectorySupervision::all_modes;
          } else {
            throw LoadError("loss.traj_supervision must be winner or all");
          }
        }
      } else if (name == "data") {
        check_keys(section, name, {"dataset"});
        read(section, "dataset", dataset);
      } else {
        throw LoadError("unknown config section '" + name + "'");
      }
    }
  } catch (const json::type_error& e) {
    throw LoadError(std::string("config value has the wrong type: ") + e.what());
  } catch (const VocabularyError& e) {
    throw LoadError(e.what());
  }
  world.latent_dim = planner.dim;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto dot = key.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == key.size()) {
    throw LoadError("override key '" + std::string(key) + "' must look like section.name");
  }
  json doc;
  doc[std::string(key.substr(0, dot))][std::string(key.substr(dot + 1))] = parse_scalar(value);
  apply(doc);
}

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw LoadError("override '" + std::string(assignment) + "' must be key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::validate() const {
  if (batch_size < 1) throw ContractError("batch_size must be at least 1");
  if (tick_stride < 1) throw ContractError("tick_stride must be at least 1");
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
  if (!(grad_clip > 0.0)) throw ContractError("grad_clip must be positive");
  planner.validate();
  world.validate();
  selection.validate();
  loss.validate();
}

RunConfig RunConfig::from_json(const json& doc) {
  RunConfig config;
  config.apply(doc);
  return config;
}

json parse_toml_subset(std::string_view text) {
  json doc = json::object();
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw LoadError("config line " + std::to_string(line_no) + ": unterminated section");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      doc[section] = json::object();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw LoadError("config line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty()) throw LoadError("config line " + std::to_string(line_no) + ": key outside a [section]");
    doc[section][trim(std::string_view(line).substr(0, eq))] = parse_scalar(std::string_view(line).substr(eq + 1));
  }
  return doc;
}

RunConfig RunConfig::load(const std::string& path) {
  const std::string text = read_file(path);
  const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  if (is_json) {
    try {
      return from_json(json::parse(text));
    } catch (const json::parse_error& e) {
      throw LoadError("config " + path + " is not valid JSON: " + e.what());
    }
  }
  return from_json(parse_toml_subset(text));
}

}  // namespace flowplan
