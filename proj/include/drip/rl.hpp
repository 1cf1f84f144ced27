#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "drip/nnet.hpp"
#include "drip/rng.hpp"
#include "drip/sim.hpp"

namespace drip::rl {

using nnet::Vec;

// Normalized action space: both components mapped to [-1, 1].
Vec normalize_action(const sim::Action& a, const sim::VehicleParams& veh);
sim::Action denormalize_action(const Vec& a, const sim::VehicleParams& veh);

// Observation featurizer: average-pooled raster patches, scaled ray
// distances and the relative target configuration, fed through an MLP.
struct ObsEncoder {
  sim::ObsConfig obs_cfg;
  int pool = 4;
  nnet::Mlp net;

  static ObsEncoder create(const sim::ObsConfig& obs_cfg, int pool,
                           const std::vector<std::size_t>& hidden, std::size_t feature_dim,
                           Rng& rng);

  std::size_t input_dim() const;
  std::size_t feature_dim() const { return net.output_width(); }
  Vec assemble(const sim::Observation& o) const;
  Vec feature(const sim::Observation& o) const { return net.forward(assemble(o)); }
};

// The RL prior in normalized action space (pre-clamp mean and std).
struct GaussianPrior {
  Vec mean;   // tanh-squashed, inside the action box
  Vec sigma;  // strictly positive

  double sigma_scalar() const { return 0.5 * (sigma[0] + sigma[1]); }
};

// Frozen actor bundle: everything needed to form the prior and act.
struct PolicyBundle {
  ObsEncoder encoder;
  nnet::Mlp actor;  // feature -> [mu_raw(2), log_std_raw(2)]
  sim::VehicleParams vehicle;
  double sigma_min = 0.05;
  double sigma_max = 1.0;

  GaussianPrior prior(const sim::Observation& o) const;
  GaussianPrior prior_from_feature(const Vec& feature) const;

  // Draws z ~ N(mu, sigma^2), clamps to the action box, returns the physical
  // action and the pre-clamp prior.
  std::pair<sim::Action, GaussianPrior> sample_prior(const sim::Observation& o, Rng& rng) const;

  void save(const std::string& path) const;
  static PolicyBundle load(const std::string& path, const sim::ObsConfig& obs_cfg,
                           const sim::VehicleParams& veh);
};

struct TwinCritics {
  nnet::Mlp q1, q2;
  nnet::Mlp q1_target, q2_target;
  double tau = 0.005;

  static TwinCritics create(std::size_t feature_dim, std::size_t action_dim,
                            const std::vector<std::size_t>& hidden, Rng& rng);
  // target <- (1 - tau) * target + tau * online, elementwise.
  void soft_update();
  double min_q(const Vec& feature, const Vec& action) const;
  double min_q_target(const Vec& feature, const Vec& action) const;
};

struct SacConfig {
  long pretrain_episodes = 100000;  // episode budget; desk runs stop on max_env_steps first
  long max_env_steps = 30000;
  long warmup_steps = 1000;
  int batch = 64;
  int update_every = 1;
  double lr = 3e-4;
  double alpha_lr = 3e-4;
  double gamma = 0.98;
  double tau = 0.005;
  double target_entropy = -2.0;
  double sigma_min = 0.05;
  double sigma_max = 1.0;
  double init_alpha = 0.2;
  std::size_t replay_capacity = 50000;
  bool use_expansion = true;  // complete training episodes via the RS shortcut
  // Fraction of training episodes whose start pose is resampled from the
  // aisle near the slot (collision-free, reachability-checked). Evaluation
  // and rollout collection always use the scenario's own start.
  double curriculum_near_frac = 0.6;
  double curriculum_near_radius = 5.0;
  int threads = 1;
  std::vector<std::size_t> encoder_hidden{128, 128};
  int raster_pool = 4;
  std::vector<std::size_t> actor_hidden{64};
  std::vector<std::size_t> critic_hidden{128, 128};
};

struct SacResult {
  PolicyBundle policy;
  TwinCritics critics;
  long env_steps = 0;
  long episodes = 0;
  long updates = 0;
  double final_alpha = 0.0;
  std::vector<double> episode_returns;
};

// Off-policy actor-critic pretraining on the given scene set. Aborts with a
// diagnostic error if any loss goes non-finite.
SacResult sac_train(const std::vector<sim::Scenario>& scenes, const sim::EnvConfig& env_cfg,
                    const SacConfig& cfg, std::uint64_t seed,
                    const std::function<void(long, double)>& progress = {});

// Success-filtered rollouts.
struct DemoStep {
  sim::Observation obs;
  sim::Action action;
  double reward = 0.0;
  bool terminal = false;
};

struct DemoEpisode {
  std::string scenario_id;
  std::vector<DemoStep> steps;
  sim::Observation final_obs;
};

struct DemoDataset {
  std::vector<DemoEpisode> episodes;

  std::size_t pair_count() const;
  void save(const std::string& path, const std::string& scenes_path) const;
  static DemoDataset load(const std::string& path);

  // Transition view used by critic training: (obs, action, reward,
  // next_obs, done).
  struct Transition {
    const sim::Observation* obs;
    const sim::Observation* next_obs;
    const sim::Action* action;
    double reward;
    bool done;
  };
  std::vector<Transition> transitions() const;
};

struct CollectConfig {
  int rollouts_per_scene = 10;
  bool use_expansion = true;
  int threads = 1;
};

DemoDataset collect_demos(const PolicyBundle& policy, const std::vector<sim::Scenario>& scenes,
                          const sim::EnvConfig& env_cfg, const CollectConfig& cfg,
                          std::uint64_t seed);

}  // namespace drip::rl
