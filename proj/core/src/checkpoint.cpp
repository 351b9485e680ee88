// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/checkpoint.hpp"

#include <fstream>

#include "flowplan/error.hpp"
#include "flowplan/hash.hpp"

namespace flowplan {

using nlohmann::json;

Checkpoint Checkpoint::capture(const nn::ParameterSet& params, const optim::OptimizerState& state, const Rng& rng) {
  Checkpoint ckpt;
  ckpt.params = json::object();
  for (const auto& [name, t] : params.entries()) {
    ckpt.params[name] = {{"shape", {t.rows(), t.cols()}},
                         {"data", std::vector<double>(t.data().begin(), t.data().end())}};
  }
  ckpt.optimizer = state;
  ckpt.rng_state = rng.state();
  return ckpt;
}

void Checkpoint::restore_params(nn::ParameterSet& params) const {
  for (const auto& [name, t] : params.entries()) {
    if (!this->params.contains(name)) throw LoadError("checkpoint is missing parameter '" + name + "'");
    const auto& entry = this->params.at(name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto data = entry.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols() || data.size() != t.numel()) {
      throw LoadError("checkpoint parameter '" + name + "' does not match model shape " + t.shape().str());
    }
    ad::Tensor target = t;
    std::copy(data.begin(), data.end(), target.mutable_data().begin());
  }
}

json Checkpoint::to_json() const {
  const auto& c = optimizer.config;
  return {{"format", "flowplan-checkpoint-v1"},
          {"params", params},
          {"optimizer",
           {{"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"weight_decay", c.weight_decay},
            {"step_count", optimizer.step_count},
            {"first_moment", optimizer.first_moment},
            {"second_moment", optimizer.second_moment}}},
          {"rng_state", rng_state},
          {"metadata", metadata}};
}

Checkpoint Checkpoint::from_json(const json& doc) {
  try {
    Checkpoint ckpt;
    ckpt.params = doc.at("params");
    const auto& o = doc.at("optimizer");
    ckpt.optimizer.config.learning_rate = o.at("learning_rate").get<double>();
    ckpt.optimizer.config.beta1 = o.at("beta1").get<double>();
    ckpt.optimizer.config.beta2 = o.at("beta2").get<double>();
    ckpt.optimizer.config.epsilon = o.at("epsilon").get<double>();
    ckpt.optimizer.config.weight_decay = o.at("weight_decay").get<double>();
    ckpt.optimizer.step_count = o.at("step_count").get<std::uint64_t>();
    ckpt.optimizer.first_moment = o.at("first_moment").get<std::map<std::string, std::vector<double>>>();
    ckpt.optimizer.second_moment = o.at("second_moment").get<std::map<std::string, std::vector<double>>>();
    ckpt.rng_state = doc.at("rng_state").get<std::string>();
    if (doc.contains("metadata")) ckpt.metadata = doc.at("metadata");
    return ckpt;
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed checkpoint: ") + e.what());
  }
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write checkpoint " + path);
  out << to_json().dump() << '\n';
}

Checkpoint Checkpoint::load(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw LoadError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

std::string Checkpoint::content_hash() const {
  json doc = to_json();
  doc.erase("metadata");
  return sha256_hex(doc.dump());
}

}  // namespace flowplan
