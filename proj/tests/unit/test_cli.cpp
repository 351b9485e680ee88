// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "fixtures.hpp"
#include "flowplan/hash.hpp"
#include "flowplan/sim.hpp"

namespace flowplan::cli {
namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kTinyRun{"--set", "run.epochs=1",   "--set", "run.tick_stride=5", "--set",
                                        "planner.modes=3", "--set", "planner.dim=8", "--set", "planner.queries=2",
                                        "--set", "flow.width=16", "--set", "flow.blocks=1", "--set",
                                        "flow.traj_embed_dim=8", "--set", "flow.time_embed_dim=4", "--quiet"};

std::string tiny_dataset_file() {
  const std::string dir = testing::temp_dir("cli_data");
  const std::string path = dir + "/data.jsonl";
  const Result r = run({"gen-data", "--seed", "11", "--episodes", "10", "--out", path});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  return path;
}

TEST(Cli, HelpListsEveryOption) {
  for (const std::string& verb : verbs()) {
    const Result r = run({verb, "--help"});
    EXPECT_EQ(r.code, kExitOk) << verb;
    for (const std::string& opt : options_of(verb)) EXPECT_NE(r.out.find(opt), std::string::npos) << verb << " " << opt;
  }
  EXPECT_EQ(verbs().size(), 5u);
}

TEST(Cli, UnknownFlagIsUsageError) {
  const Result r = run({"train", "--bogus"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("error"), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"evaluate", "--policy", "oracle", "--dataset", "/nonexistent"}).code, kExitUsage);
  EXPECT_EQ(run({"evaluate", "--policy", "expert", "--dataset", "/nonexistent"}).code, kExitFailure);
}

TEST(Cli, GenDataWritesRequestedEpisodes) {
  const std::string path = tiny_dataset_file();
  EXPECT_EQ(sim::read_dataset(path).size(), 10u);
  EXPECT_TRUE(std::filesystem::exists(path + ".manifest.json"));
}

TEST(Cli, TrainRecordsOverridesAndManifestReplays) {
  const std::string data = tiny_dataset_file();
  const std::string out = testing::temp_dir("cli_train");
  std::vector<std::string> args{"train", "--dataset", data, "--out", out + "/a", "--set", "flow.K=5"};
  args.insert(args.end(), kTinyRun.begin(), kTinyRun.end());
  const Result r = run(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto manifest = nlohmann::json::parse(read_file(out + "/a/manifest.json"));
  EXPECT_EQ(manifest["config"]["flow"]["K"], 5);
  EXPECT_EQ(manifest["dataset_hash"], git_blob_hash(read_file(data)));

  const Result again = run({"train", "--manifest", out + "/a/manifest.json", "--out", out + "/b", "--quiet"});
  ASSERT_EQ(again.code, kExitOk) << again.err;
  const auto replay = nlohmann::json::parse(read_file(out + "/b/manifest.json"));
  EXPECT_EQ(replay["checkpoint_hash"], manifest["checkpoint_hash"]);
  EXPECT_EQ(read_file(out + "/b/final_metrics.json"), read_file(out + "/a/final_metrics.json"));

  const Result eval = run({"evaluate", "--checkpoint", out + "/a", "--dataset", data, "--out", out + "/eval", "--assert"});
  EXPECT_EQ(eval.code, kExitOk) << eval.err;
  EXPECT_NE(eval.out.find("PASS"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(out + "/eval/report.json"));

  const Result inspect = run({"inspect-flow", "--checkpoint", out + "/a", "--dataset", data, "--tick", "1"});
  EXPECT_EQ(inspect.code, kExitOk) << inspect.err;
  EXPECT_NO_THROW((void)nlohmann::json::parse(inspect.out));
}

TEST(Cli, BadOverrideFails) {
  const std::string data = tiny_dataset_file();
  const Result r = run({"train", "--dataset", data, "--set", "flow.steps=5", "--out", testing::temp_dir("cli_bad")});
  EXPECT_NE(r.code, kExitOk);
  EXPECT_NE(r.err.find("flow.steps"), std::string::npos);
}

}  // namespace
}  // namespace flowplan::cli
