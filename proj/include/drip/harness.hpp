#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drip/diffusion.hpp"
#include "drip/rl.hpp"
#include "drip/sim.hpp"

namespace drip::harness {

// --- configuration -------------------------------------------------------

struct DiffusionTrainConfig {
  int train_steps = 100;      // denoising grid used during training
  int inference_steps = 25;   // uniform sub-grid used at inference
  std::string schedule = "cosine";
  double beta_lo = 1e-4;
  double beta_hi = 0.02;
  int epochs = 60;
  int batch = 64;
  double lr = 1e-4;
  double encoder_lr = 1e-5;
  double weight_decay = 1e-4;
  std::string kstar_mode = "auto";      // auto (match prior std) | fixed
  int kstar = 5;                        // fixed value, inference grid
  std::string sigma_reduction = "scalar";  // scalar | per_dim
  bool scaled_mean_init = false;        // scale the inference init mean by sqrt(ab(k*))
  double lambda = 1.0;                  // value-term weight (offline RL)
  double gamma = 0.98;                  // critic discount
  double critic_lr = 3e-4;
  double critic_tau = 0.005;
  std::vector<std::size_t> hidden{128, 128};
  int temb_dim = 64;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs/run0";
  int threads = 2;

  std::uint64_t scene_seed = 1000;
  int scenes_normal = 20;
  int scenes_medium = 30;
  int scenes_hard = 20;
  int val_normal = 2;
  int val_medium = 3;
  int val_hard = 2;
  int test_normal = 2;
  int test_medium = 3;
  int test_hard = 2;
  double vertical_fraction = 0.5;

  sim::EnvConfig env;
  rl::SacConfig sac;
  rl::CollectConfig collect;
  DiffusionTrainConfig diffusion;

  int eval_repeats = 10;
  bool eval_expansion = true;
  int n_seeds = 5;

  std::string serialize() const;
  void apply(const std::string& key, const std::string& value);
};

// Flat key = value text with '#' comments and `include <path>` lines.
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});
ExperimentConfig config_from_overrides(const std::vector<std::string>& overrides);

// --- scene sets -----------------------------------------------------------

struct SceneSet {
  std::vector<sim::Scenario> train;
  std::vector<sim::Scenario> val;
  std::vector<sim::Scenario> test;
};

// Deterministic scene emission; files are written under dir/{train,val,test}.
SceneSet generate_scene_set(const ExperimentConfig& cfg);
void save_scene_set(const SceneSet& set, const std::string& dir);
SceneSet load_scene_set(const std::string& dir);
std::vector<sim::Scenario> load_scene_dir(const std::string& dir);

// --- diffusion policy ------------------------------------------------------

enum class LossMode { Standard, Aligned };
enum class Paradigm { Imitation, OfflineRL };

struct DiffusionPolicy {
  rl::ObsEncoder cond_encoder;
  diffusion::Denoiser denoiser;
  diffusion::NoiseSchedule sched;
  std::vector<int> sub_indices;
  int k_star_inf = 5;
  int k_star_train = 20;
  double sigma_rl_scalar = 0.0;  // matched prior std (dataset median)
  bool scaled_mean_init = false;

  // Truncated inference from the prior (Alg.-2 style); `truncated = false`
  // runs the full chain from a standard normal draw instead.
  sim::Action act(const sim::Observation& o, const rl::PolicyBundle& prior, Rng& rng,
                  bool truncated) const;

  void save(const std::string& path) const;
  static DiffusionPolicy load(const std::string& path, const sim::ObsConfig& obs_cfg);
};

struct DiffusionTrainResult {
  DiffusionPolicy policy;
  rl::TwinCritics critics;  // populated for the offline-RL paradigm
  std::vector<double> epoch_losses;
  long updates = 0;
};

// Trains a denoiser on the demo dataset. The prior policy stays frozen; the
// conditioning encoder starts from its weights (or fresh ones) and is
// fine-tuned at its own learning rate.
DiffusionTrainResult train_diffusion(const rl::DemoDataset& demos,
                                     const rl::PolicyBundle& prior,
                                     const sim::EnvConfig& env_cfg,
                                     const DiffusionTrainConfig& cfg, LossMode loss_mode,
                                     Paradigm paradigm, bool encoder_from_prior,
                                     std::uint64_t seed, int threads,
                                     std::optional<int> kstar_override_inf = std::nullopt);

// --- evaluation ------------------------------------------------------------

enum class PlannerKind { Prior, Dp, DpRlInit, DripIl, DripRl, PriorInitOnly };
std::string to_string(PlannerKind k);
PlannerKind planner_from_string(const std::string& s);

struct EpisodeOutcome {
  std::string scenario_id;
  sim::Difficulty difficulty = sim::Difficulty::Normal;
  int repeat = 0;
  sim::Terminal terminal = sim::Terminal::None;
  bool success = false;
  int steps = 0;
  int gear_changes = 0;
  double inference_ms = 0.0;  // mean per planner call; measured, not part of
                              // the determinism contract
};

struct EvalReport {
  std::string planner;
  std::vector<EpisodeOutcome> episodes;
  double success_normal = 0.0;
  double success_medium = 0.0;
  double success_hard = 0.0;
  double success_overall = 0.0;
  double mean_steps = 0.0;
  double mean_gear_changes = 0.0;
  double mean_inference_ms = 0.0;

  void finalize();  // recomputes the aggregate fields from the episodes
  std::string table() const;
  std::string csv() const;
  // Hash over the deterministic fields (timings excluded).
  std::uint64_t determinism_hash() const;
};

struct Planner {
  std::string name;
  std::function<sim::Action(const sim::Observation&, Rng&)> act;
};

Planner make_planner(PlannerKind kind, const rl::PolicyBundle* prior,
                     const DiffusionPolicy* dp);

EvalReport run_eval(const Planner& planner, const std::vector<sim::Scenario>& scenes,
                    const sim::EnvConfig& env_cfg, int repeats, bool expansions,
                    std::uint64_t seed, int threads);

void save_report(const EvalReport& rep, const std::string& path_prefix);

// --- action feasibility map (case study) -----------------------------------

struct ActionMapCell {
  sim::Action action;
  bool collided = false;       // the probe action itself sweeps into an obstacle
  bool feasible = false;       // one-gear-change connection exists afterwards
  double remaining_length = 0.0;
};

struct ActionMap {
  sim::Scenario scenario;
  geom::Pose pose;
  int grid = 20;
  std::vector<ActionMapCell> cells;  // grid x grid, v-major

  double feasible_fraction() const;
};

// Fixed vertical-parking case-study scene with a probe pose whose local
// action space splits into feasible and infeasible bands.
sim::Scenario case_study_scenario();
geom::Pose case_study_pose(const sim::Scenario& s, const sim::EnvConfig& env);

ActionMap compute_action_map(const sim::Scenario& s, const geom::Pose& pose,
                             const sim::EnvConfig& env_cfg, int grid = 20);

struct ActionOverlay {
  std::string name;
  std::vector<sim::Action> samples;
};

void save_action_map(const ActionMap& map, const std::vector<ActionOverlay>& overlays,
                     const std::string& path_prefix);  // .json + .svg

// --- figures ----------------------------------------------------------------

void save_trajectory_figure(const sim::Scenario& s, const std::vector<geom::Pose>& poses,
                            const sim::VehicleParams& veh, const std::string& path);
void save_success_vs_time_figure(const std::vector<std::pair<std::string, std::pair<double, double>>>&
                                     points,  // name -> (ms, success%)
                                 const std::string& path);

// --- pipeline ----------------------------------------------------------------

struct PipelineArtifacts {
  std::string scenes_dir;
  std::string policy_ckpt;
  std::string untrained_ckpt;
  std::string demos_file;
  std::map<std::string, std::string> diffusion_ckpts;  // arm name -> path
  std::map<std::string, EvalReport> reports;           // arm name -> report
};

// Runs gen-scenes -> pretrain -> collect -> diffusion arms -> eval with
// resumable stage boundaries (a stage is skipped when its outputs exist and
// its recorded input hashes match).
PipelineArtifacts run_pipeline(const ExperimentConfig& cfg, Paradigm paradigm,
                               const std::vector<std::string>& eval_arms);

struct AblationRow {
  std::string method;
  double ratio = 0.0;
  EvalReport report;
};

std::vector<AblationRow> run_truncation_ablation(const ExperimentConfig& cfg,
                                                 const std::vector<double>& ratios);
std::string ablation_table(const std::vector<AblationRow>& rows);

std::uint64_t file_hash(const std::string& path);

}  // namespace drip::harness
