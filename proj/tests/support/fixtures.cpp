// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "flowplan/hash.hpp"

namespace flowplan::testing {

RunConfig tiny_config() {
  RunConfig c;
  c.seed = 3;
  c.epochs = 1;
  c.batch_size = 8;
  c.learning_rate = 1e-3;
  c.tick_stride = 5;
  c.planner.modes = 3;
  c.planner.queries = 2;
  c.planner.dim = 8;
  c.world.latent_dim = 8;
  c.world.traj_embed_dim = 8;
  c.world.width = 16;
  c.world.blocks = 1;
  c.world.time_embed_dim = 4;
  c.world.integration_steps = 3;
  return c;
}

const std::vector<sim::Episode>& tiny_dataset(std::size_t count) {
  static std::map<std::size_t, std::vector<sim::Episode>> cache;
  auto it = cache.find(count);
  if (it == cache.end()) it = cache.emplace(count, sim::generate_dataset(11, count, sim::ScenarioConfig::mixed())).first;
  return it->second;
}

std::string golden_dir() { return FLOWPLAN_GOLDEN_DIR; }

std::string temp_dir(const std::string& name) {
  const auto path = std::filesystem::temp_directory_path() / ("flowplan_test_" + name);
  std::filesystem::remove_all(path);
  std::filesystem::create_directories(path);
  return path.string();
}

std::string check_golden(const std::string& name, const ad::Tensor& value) {
  const std::string path = golden_dir() + "/" + name + ".json";
  if (const char* regen = std::getenv("FLOWPLAN_REGEN_GOLDEN"); regen != nullptr && std::string(regen) == "1") {
    const nlohmann::json doc = {{"shape", {value.rows(), value.cols()}},
                                {"data", std::vector<double>(value.data().begin(), value.data().end())}};
    std::ofstream(path) << doc.dump(1) << "\n";
    return "";
  }
  if (!std::filesystem::exists(path)) return "missing golden file " + path;
  const auto doc = nlohmann::json::parse(read_file(path));
  if (doc.at("shape") != nlohmann::json{value.rows(), value.cols()}) return "shape differs from " + path;
  const auto data = doc.at("data").get<std::vector<double>>();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (std::abs(data[i] - value.data()[i]) > 1e-12) {
      return name + "[" + std::to_string(i) + "] = " + std::to_string(value.data()[i]) + ", golden " +
             std::to_string(data[i]);
    }
  }
  return "";
}

}  // namespace flowplan::testing
