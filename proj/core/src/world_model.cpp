// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/world_model.hpp"

#include <cmath>

#include "flowplan/error.hpp"

namespace flowplan::world {

namespace {

std::atomic<std::uint64_t> g_velocity_calls{0};

constexpr double kTrajectoryInputScale = 0.1;  // meters -> O(1) inputs

void require_unit_interval(double value, const char* what) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw ContractError(std::string(what) + " must lie in [0, 1], got " + std::to_string(value));
  }
}

}  // namespace

std::string_view to_string(TargetConvention convention) {
  return convention == TargetConvention::paper_literal ? "paper_literal" : "path_derivative";
}

TargetConvention target_convention_from_string(std::string_view name) {
  if (name == "paper_literal") return TargetConvention::paper_literal;
  if (name == "path_derivative") return TargetConvention::path_derivative;
  throw VocabularyError("unknown target convention '" + std::string(name) + "'");
}

std::string_view to_string(DynamicsKind kind) { return kind == DynamicsKind::flow ? "flow" : "static"; }

DynamicsKind dynamics_kind_from_string(std::string_view name) {
  if (name == "flow") return DynamicsKind::flow;
  if (name == "static") return DynamicsKind::static_regressor;
  throw VocabularyError("unknown world model kind '" + std::string(name) + "' (expected flow or static)");
}

void WorldModelConfig::validate() const {
  if (latent_dim == 0 || traj_embed_dim == 0 || width == 0 || blocks == 0) {
    throw ContractError("world model dimensions must be positive");
  }
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) throw ContractError("time embedding size must be even and >= 2");
  if (!(lambda_z > 0.0) || !(lambda_t > 0.0)) throw ContractError("lambda_z and lambda_T must be positive");
  if (integration_steps < 1) throw ContractError("integration steps K must be at least 1");
  require_unit_interval(alpha.max_alpha, "alpha.max");
  require_unit_interval(alpha.fixed_alpha, "alpha.fixed");
}

AnchorState make_anchor_with_noise(const Tensor& z, const Tensor& noise, double alpha) {
  require_unit_interval(alpha, "alpha");
  if (z.shape() != noise.shape()) throw ShapeError("anchor noise " + noise.shape().str() + " vs latent " + z.shape().str());
  AnchorState state;
  state.alpha = alpha;
  state.noise = noise;
  state.a = ad::add(ad::scale(z, 1.0 - alpha), ad::scale(noise, alpha));
  return state;
}

AnchorState make_anchor(const WorldLatent& z_t, double alpha, std::uint64_t seed) {
  require_unit_interval(alpha, "alpha");
  Rng rng(seed);
  std::vector<double> eps(z_t.z.numel());
  for (double& e : eps) e = rng.normal();
  AnchorState state = make_anchor_with_noise(z_t.z, Tensor::from(z_t.z.shape(), std::move(eps)), alpha);
  state.noise_seed = seed;
  return state;
}

FlowSample interpolate(const AnchorState& anchor, const WorldLatent& z_next, double s, TargetConvention convention) {
  require_unit_interval(s, "flow time s");
  if (anchor.a.shape() != z_next.z.shape()) {
    throw ShapeError("interpolate: anchor " + anchor.a.shape().str() + " vs target " + z_next.z.shape().str());
  }
  FlowSample sample;
  sample.s = s;
  sample.x_s = ad::add(ad::scale(anchor.a, 1.0 - s), ad::scale(z_next.z, s));
  const auto a = anchor.a.data(), z = z_next.z.data();
  std::vector<double> target(a.size());
  const double factor = convention == TargetConvention::paper_literal ? 1.0 - s : 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) target[i] = factor * (z[i] - a[i]);
  sample.target_velocity = Tensor::from(anchor.a.shape(), std::move(target));
  return sample;
}

Tensor time_embedding(double s, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = half > 1 ? std::exp(std::log(1000.0) * static_cast<double>(i) / static_cast<double>(half - 1)) : 1.0;
    out[i] = std::sin(freq * s);
    out[half + i] = std::cos(freq * s);
  }
  return Tensor::from({1, dim}, std::move(out));
}

Rollout euler_integrate(const WorldLatent& z0, const ConditionEmbedding& h, std::size_t steps,
                        const VelocityField& field) {
  if (steps < 1) throw ContractError("integration needs K >= 1, got " + std::to_string(steps));
  Rollout out;
  out.velocities.step_size = 1.0 / static_cast<double>(steps);
  Tensor z = z0.z;
  for (std::size_t k = 0; k < steps; ++k) {
    const double s_k = static_cast<double>(k) / static_cast<double>(steps);
    Tensor v = field(z, s_k, h);
    if (v.shape() != z.shape()) throw ShapeError("velocity " + v.shape().str() + " vs state " + z.shape().str());
    z = ad::add(z, ad::scale(v, out.velocities.step_size));
    out.velocities.velocities.push_back(std::move(v));
  }
  out.prediction = {z, z0.timestep + 1};
  return out;
}

std::uint64_t velocity_invocations() { return g_velocity_calls.load(); }
void reset_velocity_invocations() { g_velocity_calls.store(0); }

WorldModel::WorldModel(nn::ParameterSet& params, const WorldModelConfig& config, std::size_t query_dim, Rng& rng)
    : config_(config) {
  config_.validate();
  if (query_dim != config_.latent_dim) {
    throw ShapeError("world latent width " + std::to_string(config_.latent_dim) + " must equal scene query width " +
                     std::to_string(query_dim));
  }
  const std::size_t d = config_.latent_dim, w = config_.width;
  view_mlp_ = nn::Mlp(params, "world.view_mlp", sim::kObsDim, d, d, rng);
  world_attention_ = nn::CrossAttention(params, "world.attn", d, d, d, rng);
  trajectory_embedding_ = nn::Mlp(params, "world.traj_emb", 2 * sim::kHorizon, d, config_.traj_embed_dim, rng);
  velocity_.input = nn::Linear(params, "flow.in", d, w, rng);
  velocity_.time = nn::Linear(params, "flow.time", config_.time_embed_dim, w, rng);
  velocity_.condition = nn::Linear(params, "flow.cond", config_.condition_dim(), w, rng);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    velocity_.blocks.emplace_back(params, "flow.block" + std::to_string(b), w, w, rng);
  }
  velocity_.output = nn::Linear(params, "flow.out", w, d, rng);
  velocity_.time_embed_dim = config_.time_embed_dim;
}

WorldLatent WorldModel::extract_world_features(const Tensor& raw_features, const planner::SceneQueries& scene,
                                               std::size_t timestep) const {
  if (raw_features.rows() != sim::kViews || raw_features.cols() != sim::kObsDim) {
    throw ShapeError("extract_world_features: expected " + std::to_string(sim::kViews) + " views of width " +
                     std::to_string(sim::kObsDim) + ", got " + raw_features.shape().str());
  }
  const Tensor projected = view_mlp_(raw_features);
  return {ad::add(scene.queries, world_attention_(scene.queries, projected)), timestep};
}

Tensor WorldModel::pool(const WorldLatent& z) const { return ad::mean_rows(z.z); }

ConditionEmbedding WorldModel::fuse_condition(const Tensor& pooled, const Tensor& waypoints) const {
  return fuse_condition(pooled, waypoints, config_.lambda_z, config_.lambda_t);
}

ConditionEmbedding WorldModel::fuse_condition(const Tensor& pooled, const Tensor& waypoints, double lambda_z,
                                              double lambda_t) const {
  if (pooled.rows() != 1 || pooled.cols() != config_.latent_dim) {
    throw ShapeError("fuse_condition: pooled latent must be 1x" + std::to_string(config_.latent_dim) + ", got " +
                     pooled.shape().str());
  }
  const Tensor flat = ad::scale(ad::reshape(waypoints, {1, 2 * sim::kHorizon}), kTrajectoryInputScale);
  const Tensor embedded = trajectory_embedding_(flat);
  return {ad::concat_cols({ad::scale(pooled, lambda_z), ad::scale(embedded, lambda_t)}), lambda_z, lambda_t};
}

Tensor WorldModel::predict_velocity(const Tensor& x_s, double s, const ConditionEmbedding& h) const {
  require_unit_interval(s, "flow time s");
  if (x_s.cols() != config_.latent_dim) throw ShapeError("predict_velocity: latent " + x_s.shape().str());
  if (h.h.cols() != config_.condition_dim()) throw ShapeError("predict_velocity: condition " + h.h.shape().str());
  return velocity_(x_s, s, h.h);
}

Tensor VelocityNet::operator()(const Tensor& x_s, double s, const Tensor& h) const {
  g_velocity_calls.fetch_add(1, std::memory_order_relaxed);
  Tensor tokens = input(x_s);
  tokens = ad::add(tokens, time(time_embedding(s, time_embed_dim)));
  tokens = ad::add(tokens, condition(h));
  for (const auto& block : blocks) tokens = block(tokens, tokens);
  return output(tokens);
}

VelocityNet VelocityNet::detached() const {
  VelocityNet copy;
  copy.input = input.detached();
  copy.time = time.detached();
  copy.condition = condition.detached();
  for (const auto& block : blocks) copy.blocks.push_back(block.detached());
  copy.output = output.detached();
  copy.time_embed_dim = time_embed_dim;
  return copy;
}

Rollout WorldModel::integrate_with(const WorldLatent& z_t, const ConditionEmbedding& h, std::size_t steps,
                                   const VelocityNet& net) const {
  if (h.h.cols() != config_.condition_dim()) throw ShapeError("integrate_future: condition " + h.h.shape().str());
  if (z_t.z.cols() != config_.latent_dim) throw ShapeError("integrate_future: latent " + z_t.z.shape().str());
  const VelocityField field = [&net](const Tensor& x, double s, const ConditionEmbedding& c) { return net(x, s, c.h); };
  if (config_.kind == DynamicsKind::static_regressor) return euler_integrate(z_t, h, 1, field);
  return euler_integrate(z_t, h, steps, field);
}

Rollout WorldModel::integrate_future(const WorldLatent& z_t, const ConditionEmbedding& h, std::size_t steps) const {
  return integrate_with(z_t, h, steps, velocity_);
}

Rollout WorldModel::integrate_future(const WorldLatent& z_t, const ConditionEmbedding& h,
                                     const VelocityNet& frozen) const {
  return integrate_with(z_t, h, config_.integration_steps, frozen);
}

Tensor WorldModel::flow_matching_loss(const std::vector<FlowItem>& batch, Rng& rng) const {
  std::vector<Tensor> terms;
  for (const FlowItem& item : batch) {
    for (const Tensor& waypoints : item.conditions) {
      const ConditionEmbedding h = fuse_condition(item.pooled, waypoints);
      if (config_.kind == DynamicsKind::static_regressor) {
        const Tensor prediction = ad::add(item.z_t, predict_velocity(item.z_t, 0.0, h));
        terms.push_back(ad::mse(prediction, item.z_next));
        continue;
      }
      const double alpha = config_.alpha.draw(rng);
      const std::uint64_t noise_seed = rng.next_u64();
      const double s = rng.uniform();
      const AnchorState anchor = make_anchor({item.z_t, 0}, alpha, noise_seed);
      const FlowSample sample = interpolate(anchor, {item.z_next, 1}, s, config_.target);
      terms.push_back(ad::mse(predict_velocity(sample.x_s, s, h), sample.target_velocity));
    }
  }
  if (terms.empty()) throw ContractError("flow_matching_loss on an empty batch");
  return ad::add_scalars(terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size())));
}

}  // namespace flowplan::world
