// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "flowplan/error.hpp"
#include "flowplan/optim.hpp"

namespace flowplan {

using ad::Tensor;
using nlohmann::json;

namespace {

RunConfig normalized(RunConfig config) {
  config.world.latent_dim = config.planner.dim;
  return config;
}

Tensor mean_of(const std::vector<Tensor>& terms) {
  return ad::add_scalars(terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size())));
}

std::size_t nearest_mode(const planner::TrajectorySet& set, const sim::Waypoints& gt) {
  std::size_t best = 0;
  double best_err = 0.0;
  for (std::size_t n = 0; n < set.size(); ++n) {
    const double err = selection::waypoint_l2(planner::to_waypoints(set.waypoints[n]), gt);
    if (n == 0 || err < best_err) {
      best = n;
      best_err = err;
    }
  }
  return best;
}

struct EpochStats {
  double traj = 0.0, score = 0.0, rec = 0.0, flow = 0.0, total = 0.0, grad_norm = 0.0;
  std::size_t steps = 0;
  std::size_t samples = 0;
  std::vector<std::size_t> n_star_hist;
  double sel_traj = 0.0, sel_rec = 0.0, sel_stability = 0.0;
  std::size_t matches_nearest = 0;
  std::size_t score_hits = 0;
};

}  // namespace

Model::Model(const RunConfig& config) : Model(normalized(config), Rng(derive_seed(config.seed, 1))) {}

Model::Model(const RunConfig& c, Rng&& rng)
    : planner(params, c.planner, rng), world(params, c.world, c.planner.dim, rng), config(c) {}

std::unique_ptr<Model> Model::from_checkpoint(const Checkpoint& checkpoint) {
  if (!checkpoint.metadata.contains("config")) throw LoadError("checkpoint metadata has no run config");
  auto model = std::make_unique<Model>(RunConfig::from_json(checkpoint.metadata.at("config")));
  checkpoint.restore_params(model->params);
  return model;
}

SampleForward forward_sample(const Model& model, const sim::Episode& episode, std::size_t t) {
  if (t >= episode.plannable_ticks()) {
    throw BoundsError("tick " + std::to_string(t) + " has no full horizon in episode " + episode.id);
  }
  SampleForward out;
  const Tensor features = planner::features_tensor(episode.observation_features[t]);
  const planner::SceneQueries scene = model.planner.encode_scene(features);
  out.set = model.planner.decode_trajectories(scene, episode.commands[t]);
  out.z_t = model.world.extract_world_features(features, scene, t);
  {
    ad::NoGradGuard no_grad;
    const Tensor next_features = planner::features_tensor(episode.observation_features[t + 1]);
    const planner::SceneQueries next_scene = model.planner.encode_scene(next_features);
    const world::WorldLatent next = model.world.extract_world_features(next_features, next_scene, t + 1);
    out.z_next = {next.z.detach(), t + 1};
  }
  out.gt = episode.expert_trajectory[t];
  return out;
}

Tensor total_loss(const Tensor& traj, const Tensor& score, const Tensor& rec, const Tensor& flow, const LossWeights& w) {
  w.validate();
  const std::pair<const char*, const Tensor*> parts[] = {{"traj", &traj}, {"score", &score}, {"rec", &rec}, {"flow", &flow}};
  for (const auto& [name, t] : parts) {
    if (t->numel() != 1) throw ShapeError(std::string("loss component ") + name + " is " + t->shape().str());
    if (!std::isfinite(t->item())) throw TrainingAbort(name, "loss component is not finite");
  }
  return ad::add_scalars({traj, score, rec, flow}, {1.0, w.lambda_score, w.lambda_rec, w.lambda_flow});
}

Tensor trajectory_loss(const planner::TrajectorySet& set, const Tensor& gt, std::size_t n_star) {
  return ad::l1_mean(set.mode(n_star).waypoints, gt);
}

Tensor trajectory_loss_all_modes(const planner::TrajectorySet& set, const Tensor& gt) {
  std::vector<Tensor> terms;
  for (const Tensor& w : set.waypoints) terms.push_back(ad::l1_mean(w, gt));
  if (terms.empty()) throw ContractError("trajectory loss over an empty trajectory set");
  return mean_of(terms);
}

Tensor score_loss(const planner::TrajectorySet& set, std::size_t n_star) {
  if (n_star >= set.size()) throw BoundsError("n* = " + std::to_string(n_star) + " outside the mode set");
  return ad::cross_entropy(set.logits, n_star);
}

Tensor reconstruction_loss(const world::WorldLatent& prediction, const world::WorldLatent& target) {
  return ad::mse(prediction.z, target.z.detach());
}

std::vector<TrainingSample> enumerate_samples(const std::vector<const sim::Episode*>& episodes, std::size_t stride) {
  if (stride < 1) throw ContractError("sample stride must be at least 1");
  std::vector<TrainingSample> out;
  for (const sim::Episode* ep : episodes)
    for (std::size_t t = 0; t < ep->plannable_ticks(); t += stride) out.push_back({ep, t});
  return out;
}

double score_agreement(const Model& model, const std::vector<TrainingSample>& samples) {
  if (samples.empty()) return 0.0;
  ad::NoGradGuard no_grad;
  std::size_t hits = 0;
  for (const auto& sample : samples) {
    const SampleForward f = forward_sample(model, *sample.episode, sample.tick);
    const auto assessment = selection::assess_modes(f.set, f.z_t, f.z_next, f.gt, model.world, model.config.selection);
    hits += planner::select_output_index(f.set) == assessment.best ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

TrainResult train(const RunConfig& raw_config, const std::vector<sim::Episode>& dataset, const TrainOptions& options) {
  const RunConfig config = normalized(raw_config);
  config.validate();
  if (dataset.empty()) throw ContractError("train: dataset is empty");
  const auto train_eps = sim::select_split(dataset, sim::Split::train);
  const auto val_eps = sim::select_split(dataset, sim::Split::val);
  if (train_eps.empty()) throw ContractError("train: the train split is empty");
  const auto samples = enumerate_samples(train_eps, config.tick_stride);
  const auto val_samples = enumerate_samples(val_eps, config.tick_stride);
  if (samples.empty()) throw ContractError("train: no plannable ticks in the train split");

  TrainResult result;
  result.model = std::make_unique<Model>(config);
  Model& model = *result.model;
  optim::AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  adam.weight_decay = config.weight_decay;
  adam.validate();
  optim::OptimizerState opt{adam, {}, {}, 0};
  Rng rng(derive_seed(config.seed, 2));

  const auto make_checkpoint = [&] {
    Checkpoint ck = Checkpoint::capture(model.params, opt, rng);
    ck.metadata["config"] = config.to_json();
    ck.metadata["anchors"] = model.planner.anchors_json();
    ck.metadata["epochs_completed"] = result.epochs.size();
    return ck;
  };

  std::ofstream metrics_log;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    metrics_log.open(options.out_dir + "/metrics.jsonl", std::ios::trunc);
    if (!metrics_log) throw LoadError("cannot write " + options.out_dir + "/metrics.jsonl");
  }

  std::vector<std::size_t> order(samples.size());
  std::size_t global_step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

    EpochStats stats;
    stats.n_star_hist.assign(config.planner.modes, 0);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const world::VelocityNet frozen = model.world.frozen_velocity();
      std::vector<Tensor> traj_terms, score_terms, rec_terms;
      std::vector<world::FlowItem> flow_items;
      json dump_modes = json::array();

      for (std::size_t i = begin; i < end; ++i) {
        const TrainingSample& sample = samples[order[i]];
        const SampleForward f = forward_sample(model, *sample.episode, sample.tick);
        const auto assessment =
            selection::assess_modes(f.set, f.z_t, f.z_next, f.gt, model.world, config.selection);
        const std::size_t n_star = assessment.best;
        const Tensor gt = planner::waypoints_tensor(f.gt);

        traj_terms.push_back(config.trajectory_supervision == TrajectorySupervision::winner_take_all
                                 ? trajectory_loss(f.set, gt, n_star)
                                 : trajectory_loss_all_modes(f.set, gt));
        score_terms.push_back(score_loss(f.set, n_star));
        const Tensor pooled = model.world.pool(f.z_t);
        const auto h = model.world.fuse_condition(pooled, f.set.waypoints[n_star]);
        rec_terms.push_back(reconstruction_loss(model.world.integrate_future(f.z_t, h, frozen).prediction, f.z_next));

        // Flow conditions: the GT-nearest mode plus one other mode drawn at random.
        const std::size_t nearest = nearest_mode(f.set, f.gt);
        std::vector<Tensor> conditions{f.set.waypoints[nearest].detach()};
        if (f.set.size() > 1) {
          const std::size_t other = (nearest + 1 + rng.index(f.set.size() - 1)) % f.set.size();
          conditions.push_back(f.set.waypoints[other].detach());
        }
        flow_items.push_back({f.z_t.z.detach(), f.z_next.z, pooled.detach(), std::move(conditions)});

        const auto& chosen = assessment.modes[n_star];
        ++stats.samples;
        ++stats.n_star_hist[n_star];
        stats.sel_traj += chosen.traj_err;
        stats.sel_rec += chosen.rec_err;
        stats.sel_stability += chosen.stability;
        stats.matches_nearest += n_star == nearest ? 1 : 0;
        stats.score_hits += planner::select_output_index(f.set) == n_star ? 1 : 0;
        if (options.selection_dump != nullptr) {
          json entry = selection::assessment_json(assessment);
          entry["episode"] = sample.episode->id;
          entry["tick"] = sample.tick;
          dump_modes.push_back(std::move(entry));
        }
      }

      const Tensor traj = mean_of(traj_terms);
      const Tensor score = mean_of(score_terms);
      const Tensor rec = mean_of(rec_terms);
      const Tensor flow = model.world.flow_matching_loss(flow_items, rng);
      const Tensor total = total_loss(traj, score, rec, flow, config.loss);

      model.params.zero_grad();
      ad::backward(total);
      const double grad_norm = model.params.clip_grad_norm(config.grad_clip);
      if (!std::isfinite(grad_norm)) throw TrainingAbort("grad_norm", "gradient norm is not finite");
      optim::adam_step(model.params, opt);

      const StepRecord record{epoch, global_step, traj.item(), score.item(), rec.item(), flow.item(), total.item(),
                              grad_norm};
      if (options.on_step) options.on_step(record);
      if (options.selection_dump != nullptr) {
        *options.selection_dump << json{{"epoch", epoch}, {"step", global_step}, {"samples", dump_modes}}.dump()
                                << '\n';
      }
      ++global_step;
      ++stats.steps;
      stats.traj += record.traj;
      stats.score += record.score;
      stats.rec += record.rec;
      stats.flow += record.flow;
      stats.total += record.total;
      stats.grad_norm += grad_norm;
    }

    const auto steps = static_cast<double>(stats.steps);
    const auto count = static_cast<double>(stats.samples);
    json record = {
        {"epoch", epoch},
        {"steps", stats.steps},
        {"loss",
         {{"traj", stats.traj / steps},
          {"score", stats.score / steps},
          {"rec", stats.rec / steps},
          {"flow", stats.flow / steps},
          {"total", stats.total / steps}}},
        {"grad_norm", stats.grad_norm / steps},
        {"selection",
         {{"n_star_histogram", stats.n_star_hist},
          {"traj_err", stats.sel_traj / count},
          {"rec_err", stats.sel_rec / count},
          {"stability", stats.sel_stability / count},
          {"matches_l2_nearest", static_cast<double>(stats.matches_nearest) / count},
          {"train_score_agreement", static_cast<double>(stats.score_hits) / count}}},
        {"val_score_agreement", score_agreement(model, val_samples)},
    };
    result.epochs.push_back(record);
    if (options.progress != nullptr) {
      *options.progress << "epoch " << epoch << "/" << config.epochs << " total=" << record["loss"]["total"].get<double>()
                        << " flow=" << record["loss"]["flow"].get<double>()
                        << " val_agree=" << record["val_score_agreement"].get<double>() << std::endl;
    }
    if (metrics_log.is_open()) {
      metrics_log << record.dump() << '\n';
      metrics_log.flush();
      make_checkpoint().save(options.out_dir + "/checkpoint.json");
    }
  }

  result.checkpoint = make_checkpoint();
  result.final_metrics = {
      {"epochs", config.epochs},
      {"steps", global_step},
      {"val_score_agreement", result.epochs.empty() ? score_agreement(model, val_samples)
                                                    : result.epochs.back()["val_score_agreement"].get<double>()},
      {"chance", 1.0 / static_cast<double>(config.planner.modes)},
      {"checkpoint_hash", result.checkpoint.content_hash()},
  };
  if (!result.epochs.empty()) {
    const double first = result.epochs.front()["loss"]["flow"].get<double>();
    const double last = result.epochs.back()["loss"]["flow"].get<double>();
    result.final_metrics["flow_loss_first_epoch"] = first;
    result.final_metrics["flow_loss_final_epoch"] = last;
    result.final_metrics["flow_loss_drop"] = first > 0.0 ? 1.0 - last / first : 0.0;
  }
  if (!options.out_dir.empty()) {
    result.checkpoint.save(options.out_dir + "/checkpoint.json");
    std::ofstream(options.out_dir + "/final_metrics.json") << result.final_metrics.dump(2) << '\n';
  }
  return result;
}

}  // namespace flowplan
