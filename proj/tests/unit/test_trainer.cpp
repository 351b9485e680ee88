// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "flowplan/error.hpp"
#include "flowplan/ops.hpp"
#include "flowplan/stability.hpp"
#include "flowplan/trainer.hpp"

namespace flowplan {
namespace {

using ad::Tensor;

planner::TrajectorySet fixed_set(std::size_t modes, double offset) {
  planner::TrajectorySet set;
  for (std::size_t n = 0; n < modes; ++n) {
    std::vector<double> v(2 * sim::kHorizon, static_cast<double>(n) + offset);
    set.waypoints.push_back(Tensor::from({sim::kHorizon, 2}, v, true));
  }
  set.logits = Tensor::zeros({1, modes}, true);
  return set;
}

TEST(Losses, TotalUsesDefaultWeights) {
  const Tensor one = Tensor::scalar(1.0);
  EXPECT_NEAR(total_loss(one, one, one, one, LossWeights{}).item(), 1.8, 1e-15);
  EXPECT_THROW(total_loss(one, Tensor::scalar(std::nan("")), one, one, LossWeights{}), TrainingAbort);
  try {
    total_loss(one, one, Tensor::scalar(INFINITY), one, LossWeights{});
  } catch (const TrainingAbort& e) {
    EXPECT_EQ(e.component(), "rec");
  }
}

TEST(Losses, TrajectoryL1AndGradient) {
  const auto set = fixed_set(3, 0.25);
  const Tensor gt = Tensor::zeros({sim::kHorizon, 2});
  const Tensor l = trajectory_loss(set, gt, 0);
  EXPECT_NEAR(l.item(), 0.25, 1e-15);
  ad::backward(l);
  for (double g : set.waypoints[0].grad()) EXPECT_NEAR(g, 1.0 / (2.0 * sim::kHorizon), 1e-15);
  EXPECT_TRUE(set.waypoints[1].grad().empty() || set.waypoints[1].grad()[0] == 0.0);

  const auto below = fixed_set(1, -0.5);
  ad::backward(trajectory_loss(below, gt, 0));
  for (double g : below.waypoints[0].grad()) EXPECT_NEAR(g, -1.0 / (2.0 * sim::kHorizon), 1e-15);
  EXPECT_NEAR(trajectory_loss_all_modes(fixed_set(3, 0.25), gt).item(), (0.25 + 1.25 + 2.25) / 3, 1e-12);
}

TEST(Losses, ScoreUniformIsLogN) {
  const auto set = fixed_set(6, 0.0);
  EXPECT_NEAR(score_loss(set, 4).item(), std::log(6.0), 1e-12);
  EXPECT_THROW(score_loss(set, 6), BoundsError);
}

TEST(Losses, ReconstructionIsDeltaSquared) {
  const double delta = 0.3;
  Tensor pred = Tensor::full({2, 4}, 1.0 + delta, true);
  const Tensor target = Tensor::full({2, 4}, 1.0, true);
  const Tensor l = reconstruction_loss({pred, 1}, {target, 1});
  EXPECT_NEAR(l.item(), delta * delta, 1e-12);
  ad::backward(l);
  EXPECT_TRUE(target.grad().empty() || target.grad()[0] == 0.0);
}

double grad_sq(const nn::ParameterSet& ps, const std::string& prefix) {
  double s = 0.0;
  for (const auto& [name, t] : ps.entries())
    if (name.rfind(prefix, 0) == 0)
      for (double g : t.grad()) s += g * g;
  return s;
}

// One batch of the training objective, assembled the same way as train().
Tensor batch_loss(Model& m, Rng& rng) {
  const auto frozen = m.world.frozen_velocity();
  const auto& ep = testing::tiny_dataset()[1];
  const SampleForward f = forward_sample(m, ep, 2);
  const auto a = selection::assess_modes(f.set, f.z_t, f.z_next, f.gt, m.world, m.config.selection);
  const Tensor gt = planner::waypoints_tensor(f.gt);
  const Tensor pooled = m.world.pool(f.z_t);
  const Tensor rec = reconstruction_loss(
      m.world.integrate_future(f.z_t, m.world.fuse_condition(pooled, f.set.waypoints[a.best]), frozen).prediction,
      f.z_next);
  const Tensor flow = m.world.flow_matching_loss({{f.z_t.z.detach(), f.z_next.z, pooled.detach(), {gt}}}, rng);
  return total_loss(trajectory_loss(f.set, gt, a.best), score_loss(f.set, a.best), rec, flow, m.config.loss);
}

TEST(Losses, ZeroFlowWeightGivesZeroVelocityGradients) {
  RunConfig cfg = testing::tiny_config();
  cfg.loss.lambda_flow = 0.0;
  Model m(cfg);
  Rng rng(1);
  m.params.zero_grad();
  ad::backward(batch_loss(m, rng));
  EXPECT_EQ(grad_sq(m.params, "flow."), 0.0);
  EXPECT_GT(grad_sq(m.params, "planner."), 0.0);
  EXPECT_GT(grad_sq(m.params, "world."), 0.0);

  Model m2(testing::tiny_config());
  m2.params.zero_grad();
  ad::backward(batch_loss(m2, rng));
  EXPECT_GT(grad_sq(m2.params, "flow."), 0.0);
}

TEST(Training, SamplesFollowStride) {
  const auto& data = testing::tiny_dataset();
  const std::vector<const sim::Episode*> eps{&data[0], &data[1]};
  const auto all = enumerate_samples(eps, 1);
  EXPECT_EQ(all.size(), data[0].plannable_ticks() + data[1].plannable_ticks());
  const auto every3 = enumerate_samples(eps, 3);
  for (const auto& s : every3) EXPECT_EQ(s.tick % 3, 0u);
  EXPECT_THROW(enumerate_samples(eps, 0), ContractError);
}

TEST(Training, ZeroEpochsReturnsInitialWeights) {
  RunConfig cfg = testing::tiny_config();
  cfg.epochs = 0;
  const TrainResult r = train(cfg, testing::tiny_dataset());
  const Model fresh(cfg);
  for (std::size_t i = 0; i < fresh.params.entries().size(); ++i) {
    const auto& a = fresh.params.entries()[i].second;
    const auto& b = r.model->params.entries()[i].second;
    for (std::size_t j = 0; j < a.numel(); ++j) ASSERT_EQ(a.data()[j], b.data()[j]);
  }
  EXPECT_TRUE(r.epochs.empty());
  EXPECT_FALSE(r.final_metrics.contains("flow_loss_drop"));
}

TEST(Training, StepTotalsDecomposeExactly) {
  std::vector<StepRecord> steps;
  TrainOptions opts;
  opts.on_step = [&](const StepRecord& s) { steps.push_back(s); };
  const TrainResult r = train(testing::tiny_config(), testing::tiny_dataset(), opts);
  ASSERT_FALSE(steps.empty());
  for (const auto& s : steps) {
    EXPECT_NEAR(s.total, s.traj + 0.5 * s.score + 0.2 * s.rec + 0.1 * s.flow, 1e-12);
    EXPECT_GE(s.grad_norm, 0.0);
  }
  EXPECT_EQ(r.final_metrics["steps"].get<std::size_t>(), steps.size());
}

TEST(Training, IdenticalConfigIsReproducible) {
  const std::string dir = testing::temp_dir("train_repro");
  TrainOptions opts;
  opts.out_dir = dir;
  const TrainResult a = train(testing::tiny_config(), testing::tiny_dataset(), opts);
  const TrainResult b = train(testing::tiny_config(), testing::tiny_dataset());
  EXPECT_EQ(a.checkpoint.content_hash(), b.checkpoint.content_hash());
  EXPECT_EQ(a.final_metrics, b.final_metrics);
  EXPECT_TRUE(std::filesystem::exists(dir + "/metrics.jsonl"));
  EXPECT_EQ(Checkpoint::load(dir + "/checkpoint.json").content_hash(), a.checkpoint.content_hash());

  RunConfig other = testing::tiny_config();
  other.seed = 4;
  EXPECT_NE(train(other, testing::tiny_dataset()).checkpoint.content_hash(), a.checkpoint.content_hash());
}

TEST(Training, CheckpointRestoresModel) {
  const TrainResult r = train(testing::tiny_config(), testing::tiny_dataset());
  const auto restored = Model::from_checkpoint(Checkpoint::from_json(r.checkpoint.to_json()));
  const auto& ep = testing::tiny_dataset()[15];
  const auto a = forward_sample(*r.model, ep, 1), b = forward_sample(*restored, ep, 1);
  for (std::size_t i = 0; i < a.set.logits.numel(); ++i) EXPECT_EQ(a.set.logits.data()[i], b.set.logits.data()[i]);
  EXPECT_THROW(forward_sample(*restored, ep, ep.plannable_ticks()), BoundsError);
}

TEST(Config, TomlAndOverrides) {
  const std::string path = testing::temp_dir("config") + "/run.toml";
  std::ofstream(path) << "# comment\n[run]\nseed = 9\nlearning_rate = 1e-3\n\n[flow]\nK = 3\nkind = \"static\"\n"
                         "[loss]\ntraj_supervision = \"all\"\n";
  RunConfig c = RunConfig::load(path);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-3);
  EXPECT_EQ(c.world.integration_steps, 3u);
  EXPECT_EQ(c.world.kind, world::DynamicsKind::static_regressor);
  EXPECT_EQ(c.trajectory_supervision, TrajectorySupervision::all_modes);
  c.apply_override("flow.K=5");
  c.apply_override("flow.target_convention=path_derivative");
  EXPECT_EQ(c.world.integration_steps, 5u);
  EXPECT_EQ(c.world.target, world::TargetConvention::path_derivative);
  EXPECT_EQ(RunConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(c.apply_override("flow.steps=5"), LoadError);
  EXPECT_THROW(c.apply_override("nosection.K=5"), LoadError);
  EXPECT_ANY_THROW(c.apply_override("flow.K"));
}

TEST(Config, DefaultsMatchReferenceWeights) {
  const RunConfig c;
  EXPECT_EQ(c.world.integration_steps, 5u);
  EXPECT_DOUBLE_EQ(c.selection.lambda_rec, 1.0);
  EXPECT_DOUBLE_EQ(c.selection.lambda_traj, 1.0);
  EXPECT_DOUBLE_EQ(c.selection.lambda_theta, 0.5);
  EXPECT_DOUBLE_EQ(c.loss.lambda_score, 0.5);
  EXPECT_DOUBLE_EQ(c.loss.lambda_rec, 0.2);
  EXPECT_DOUBLE_EQ(c.loss.lambda_flow, 0.1);
  EXPECT_DOUBLE_EQ(c.grad_clip, 5.0);
}

}  // namespace
}  // namespace flowplan
