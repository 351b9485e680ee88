// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "flowplan/nn.hpp"
#include "flowplan/planner.hpp"

namespace flowplan::world {

using ad::Tensor;

/// Regression target for the velocity network along x_s = (1-s)a + s·z_next.
enum class TargetConvention {
  paper_literal,    // (1 - s)(z_next - a)
  path_derivative,  // z_next - a, the derivative of the interpolation path
};
std::string_view to_string(TargetConvention convention);
TargetConvention target_convention_from_string(std::string_view name);

/// How the latent evolves from t to t+1.
enum class DynamicsKind {
  flow,              // trajectory-conditioned velocity field, Euler-integrated
  static_regressor,  // single residual regression step, no flow matching
};
std::string_view to_string(DynamicsKind kind);
DynamicsKind dynamics_kind_from_string(std::string_view name);

struct AlphaPolicy {
  bool sampled = true;
  double max_alpha = 0.5;  // sampled alpha ~ U(0, max_alpha)
  double fixed_alpha = 0.25;

  double draw(Rng& rng) const { return sampled ? rng.uniform(0.0, max_alpha) : fixed_alpha; }
};

struct WorldModelConfig {
  std::size_t latent_dim = 32;        // D_w; equals the planner query width
  std::size_t traj_embed_dim = 32;    // d_T
  std::size_t width = 64;             // velocity network width
  std::size_t blocks = 2;
  std::size_t time_embed_dim = 16;
  double lambda_z = 1.0;
  double lambda_t = 1.0;
  std::size_t integration_steps = 5;  // K
  TargetConvention target = TargetConvention::paper_literal;
  AlphaPolicy alpha;
  DynamicsKind kind = DynamicsKind::flow;

  std::size_t condition_dim() const { return latent_dim + traj_embed_dim; }
  void validate() const;
};

/// z̃ʷ at one tick; n_q × D_w.
struct WorldLatent {
  Tensor z;
  std::size_t timestep = 0;
};

struct AnchorState {
  Tensor a;
  Tensor noise;
  double alpha = 0.0;
  std::uint64_t noise_seed = 0;
};

struct ConditionEmbedding {
  Tensor h;  // 1 × (D_w + d_T), latent part first
  double lambda_z = 1.0;
  double lambda_t = 1.0;
};

struct FlowSample {
  Tensor x_s;
  double s = 0.0;
  Tensor target_velocity;
};

struct VelocitySequence {
  std::vector<Tensor> velocities;  // K entries, integration order
  double step_size = 1.0;          // Δs = 1/K

  std::size_t size() const { return velocities.size(); }
};

struct Rollout {
  WorldLatent prediction;
  VelocitySequence velocities;
};

using VelocityField = std::function<Tensor(const Tensor& x, double s, const ConditionEmbedding& h)>;

// Stateless pieces ---------------------------------------------------------

/// a = (1-α)z + α·ε with ε a standard normal draw from `seed`.
AnchorState make_anchor(const WorldLatent& z_t, double alpha, std::uint64_t seed);
/// Anchor with an explicit noise tensor; used by tests and by make_anchor.
AnchorState make_anchor_with_noise(const Tensor& z, const Tensor& noise, double alpha);
/// x_s and its regression target under `convention`; the target is detached.
FlowSample interpolate(const AnchorState& anchor, const WorldLatent& z_next, double s, TargetConvention convention);
/// 1 × dim sinusoidal embedding of the flow time.
Tensor time_embedding(double s, std::size_t dim);
/// z_{k+1} = z_k + Δs·field(z_k, k/K, h) for k = 0..K-1, starting at z0.
Rollout euler_integrate(const WorldLatent& z0, const ConditionEmbedding& h, std::size_t steps,
                        const VelocityField& field);

/// Number of velocity-network evaluations on all threads since process start.
std::uint64_t velocity_invocations();
void reset_velocity_invocations();

/// One training item for the flow objective: current and next latents plus
/// the trajectories whose conditions supervise the velocity field.
struct FlowItem {
  Tensor z_t;         // detached
  Tensor z_next;      // detached
  Tensor pooled;      // detached 1 × D_w
  std::vector<Tensor> conditions;  // H × 2 waypoints, detached
};

/// F_θ: per-token velocity network over the latent, conditioned on flow time
/// and the fused trajectory condition.
struct VelocityNet {
  nn::Linear input;
  nn::Linear time;
  nn::Linear condition;
  std::vector<nn::AttentionBlock> blocks;
  nn::Linear output;
  std::size_t time_embed_dim = 16;

  Tensor operator()(const Tensor& x_s, double s, const Tensor& h) const;
  VelocityNet detached() const;
};

class WorldModel {
 public:
  WorldModel(nn::ParameterSet& params, const WorldModelConfig& config, std::size_t query_dim, Rng& rng);

  /// Per-view MLP projection of the raw features, then the scene queries
  /// cross-attend over the projected views (residual on the queries).
  WorldLatent extract_world_features(const Tensor& raw_features, const planner::SceneQueries& scene,
                                     std::size_t timestep = 0) const;
  /// Mean over the query tokens; the latent half of the condition.
  Tensor pool(const WorldLatent& z) const;
  ConditionEmbedding fuse_condition(const Tensor& pooled, const Tensor& waypoints) const;
  ConditionEmbedding fuse_condition(const Tensor& pooled, const Tensor& waypoints, double lambda_z,
                                    double lambda_t) const;
  Tensor predict_velocity(const Tensor& x_s, double s, const ConditionEmbedding& h) const;
  /// Flow model: K Euler steps from z_t. Static regressor: one residual step
  /// z_t + G(z_t, h) with an empty-angle velocity record.
  Rollout integrate_future(const WorldLatent& z_t, const ConditionEmbedding& h, std::size_t steps) const;
  Rollout integrate_future(const WorldLatent& z_t, const ConditionEmbedding& h) const {
    return integrate_future(z_t, h, config_.integration_steps);
  }
  /// Same rollout through a fixed copy of F_θ: gradients reach z_t and h but
  /// never the velocity parameters. Take a fresh copy after each update.
  Rollout integrate_future(const WorldLatent& z_t, const ConditionEmbedding& h, const VelocityNet& frozen) const;
  VelocityNet frozen_velocity() const { return velocity_.detached(); }

  /// Mean squared velocity error over items × conditions. Draws s, alpha and
  /// anchor noise per condition from `rng`. For the static regressor this is
  /// the one-step regression error instead.
  Tensor flow_matching_loss(const std::vector<FlowItem>& batch, Rng& rng) const;

  const WorldModelConfig& config() const { return config_; }
  WorldModelConfig& mutable_config() { return config_; }

  nn::Mlp& view_mlp() { return view_mlp_; }
  nn::CrossAttention& world_attention() { return world_attention_; }
  nn::Mlp& trajectory_embedding() { return trajectory_embedding_; }
  nn::Linear& velocity_output() { return velocity_.output; }

 private:
  WorldModelConfig config_;
  nn::Mlp view_mlp_;
  nn::CrossAttention world_attention_;
  nn::Mlp trajectory_embedding_;
  VelocityNet velocity_;

  Rollout integrate_with(const WorldLatent& z_t, const ConditionEmbedding& h, std::size_t steps,
                         const VelocityNet& net) const;
};

}  // namespace flowplan::world
