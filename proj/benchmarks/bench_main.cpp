// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "flowplan/eval.hpp"
#include "flowplan/ops.hpp"
#include "flowplan/trainer.hpp"

namespace {

using namespace flowplan;
using ad::Tensor;

Tensor random(ad::Shape shape, Rng& rng) {
  std::vector<double> v(shape.numel());
  for (double& x : v) x = rng.normal();
  return Tensor::from(shape, std::move(v));
}

const std::vector<sim::Episode>& dataset() {
  static const auto data = sim::generate_dataset(7, 20, sim::ScenarioConfig::mixed());
  return data;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random({n, n}, rng), b = random({n, n}, rng);
  ad::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ad::matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_PlannerForward(benchmark::State& state) {
  const Model model(RunConfig{});
  const Tensor features = planner::features_tensor(dataset()[0].observation_features[0]);
  ad::NoGradGuard no_grad;
  for (auto _ : state) {
    const auto set = model.planner.decode_trajectories(model.planner.encode_scene(features), sim::Command::straight);
    benchmark::DoNotOptimize(set.logits.data().data());
  }
}
BENCHMARK(BM_PlannerForward);

void BM_VelocityEval(benchmark::State& state) {
  const Model model(RunConfig{});
  Rng rng(2);
  const Tensor z = random({model.planner.config().queries, model.world.config().latent_dim}, rng);
  const auto h = model.world.fuse_condition(ad::mean_rows(z), planner::waypoints_tensor(dataset()[0].expert_trajectory[0]));
  ad::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.world.predict_velocity(z, 0.5, h).data().data());
}
BENCHMARK(BM_VelocityEval);

void BM_Rollout(benchmark::State& state) {
  RunConfig config;
  config.world.integration_steps = static_cast<std::size_t>(state.range(0));
  const Model model(config);
  Rng rng(2);
  const Tensor z = random({model.planner.config().queries, model.world.config().latent_dim}, rng);
  const auto h = model.world.fuse_condition(ad::mean_rows(z), planner::waypoints_tensor(dataset()[0].expert_trajectory[0]));
  ad::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.world.integrate_future({z, 0}, h).prediction.z.data().data());
}
BENCHMARK(BM_Rollout)->Arg(1)->Arg(5)->Arg(10);

void BM_TrainEpoch(benchmark::State& state) {
  RunConfig config;
  config.epochs = 1;
  config.batch_size = 8;
  config.tick_stride = 4;
  for (auto _ : state) benchmark::DoNotOptimize(train(config, dataset()).final_metrics);
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
  const Model model(RunConfig{});
  const auto episodes = sim::select_split(dataset(), sim::Split::test);
  for (auto _ : state) benchmark::DoNotOptimize(eval::evaluate(&model, episodes).pdms);
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
