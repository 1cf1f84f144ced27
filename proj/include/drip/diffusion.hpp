#pragma once

#include <span>
#include <vector>

#include "drip/nnet.hpp"
#include "drip/rng.hpp"

namespace drip::diffusion {

using nnet::Vec;

// Variance schedule tables. beta/alpha are indexed 1..K (index 0 unused),
// alpha_bar is indexed 0..K with alpha_bar[0] = 1.
struct NoiseSchedule {
  enum class Kind { Cosine, Linear };

  Kind kind = Kind::Cosine;
  int K = 0;
  double beta_lo = 1e-4;  // linear endpoints
  double beta_hi = 0.02;
  Vec beta;
  Vec alpha;
  Vec alpha_bar;

  double sqrt_ab(int k) const { return std::sqrt(alpha_bar[static_cast<std::size_t>(k)]); }
  double sqrt_one_minus_ab(int k) const {
    return std::sqrt(1.0 - alpha_bar[static_cast<std::size_t>(k)]);
  }
};

NoiseSchedule build_schedule(NoiseSchedule::Kind kind, int K, double beta_lo = 1e-4,
                             double beta_hi = 0.02);

NoiseSchedule::Kind schedule_kind_from_string(const std::string& s);
std::string to_string(NoiseSchedule::Kind k);

// Uniform n-step inference sub-grid over the training grid; returns the train
// indices of inference steps 1..n (last entry is always K).
std::vector<int> ddim_subsequence(const NoiseSchedule& sched, int n);

// argmin_k |sigma - sqrt(1 - alpha_bar^k)| over k = 1..K, ties toward the
// smaller k.
int select_truncation(const NoiseSchedule& sched, double sigma);

// Same matching over an inference sub-grid; returns the 1-based sub-grid step.
int select_truncation_subgrid(const NoiseSchedule& sched, std::span<const int> sub_indices,
                              double sigma);

struct Coefficients {
  double w1 = 0.0;  // weight on mu_RL
  double w2 = 0.0;  // weight on a0
};

// Interpolation weights of the time-variant mean; k and k_star are train-grid
// indices in [0, K].
Coefficients coefficients(int k, const NoiseSchedule& sched, int k_star);

// mu(k) = w1(k) mu_RL + w2(k) a0 for k <= k_star, mu_RL above.
Vec mean_schedule(int k, const Vec& a0, const Vec& mu_rl, const NoiseSchedule& sched, int k_star);

// a^(k) = sqrt(ab^k) a0 + sqrt(1-ab^k) eps.
Vec forward_standard(const Vec& a0, int k, const NoiseSchedule& sched, const Vec& eps);

// a^(k) = sqrt(ab^k) mu(k) + sqrt(1-ab^k) eps.
Vec forward_aligned(const Vec& a0, const Vec& mu_rl, int k, const NoiseSchedule& sched,
                    int k_star, const Vec& eps);

// Noise-prediction target of the aligned objective:
// eps + sqrt(ab^k/(1-ab^k)) (mu(k) - a0).
Vec aligned_target(const Vec& eps, int k, const Vec& a0, const Vec& mu_rl,
                   const NoiseSchedule& sched, int k_star);

// Reference DDPM reverse-transition formulas. Documented for completeness and
// covered by unit identities; inference uses the DDIM path below.
Vec ddpm_reverse_mean(const Vec& a_k, int k, const Vec& eps_pred, const NoiseSchedule& sched);
double ddpm_posterior_variance(int k, const NoiseSchedule& sched);

// DDIM: predicted clean action and the deterministic step to k-1 on the
// training grid.
Vec ddim_predict_a0(const Vec& a_k, int k, const Vec& eps_pred, const NoiseSchedule& sched);
Vec ddim_step(const Vec& a_k, int k, const Vec& eps_pred, const NoiseSchedule& sched);

// Generic DDIM update between two accumulated-product levels.
Vec ddim_step_between(const Vec& a, const Vec& eps_pred, double ab_from, double ab_to);

// Denoising head: eps_theta(a^(k), k, cond). The timestep is embedded
// sinusoidally and concatenated with the action and conditioning feature.
struct Denoiser {
  nnet::Mlp net;
  std::size_t action_dim = 2;
  std::size_t temb_dim = 64;
  std::size_t cond_dim = 0;

  static Denoiser create(std::size_t action_dim, std::size_t temb_dim, std::size_t cond_dim,
                         std::vector<std::size_t> hidden, Rng& rng);

  std::size_t input_dim() const { return action_dim + temb_dim + cond_dim; }
  Vec assemble_input(const Vec& a_k, int k, std::span<const double> cond) const;
  Vec eval(const Vec& a_k, int k, std::span<const double> cond) const;
  Vec eval(const Vec& a_k, int k, std::span<const double> cond, nnet::Mlp::Cache& cache) const;
};

// Per-sample draw of a training batch: dataset row, diffusion step, noise.
struct DiffusionBatchPlan {
  struct Item {
    std::size_t index = 0;
    int k = 1;
    Vec eps;
  };
  std::vector<Item> items;
};

DiffusionBatchPlan sample_batch_plan(std::size_t dataset_size, std::size_t batch, int K,
                                     std::size_t action_dim, Rng& rng);

// Mean squared noise-prediction losses over an explicit batch. `a0`,
// `mu_rl` and `cond` are dataset rows addressed by the plan's indices.
double dp_loss_standard(const DiffusionBatchPlan& plan, const Denoiser& denoiser,
                        const std::vector<Vec>& a0, const std::vector<Vec>& cond,
                        const NoiseSchedule& sched);
double dp_loss_aligned(const DiffusionBatchPlan& plan, const Denoiser& denoiser,
                       const std::vector<Vec>& a0, const std::vector<Vec>& mu_rl,
                       const std::vector<Vec>& cond, const NoiseSchedule& sched, int k_star);

// Records of a truncated DDIM rollout, kept for exact backpropagation
// through the unrolled chain.
struct ChainTrace {
  std::vector<Vec> a;                     // a[j] for j = 0..j_start (index by sub-step)
  std::vector<nnet::Mlp::Cache> caches;   // cache per executed step j = 1..j_start
  std::vector<Vec> eps_out;               // denoiser outputs per executed step
};

// Runs the deterministic DDIM chain from a_init at sub-step j_start down to
// the clean action; sub_indices map sub-steps to train indices.
Vec chain_forward(const Denoiser& denoiser, const NoiseSchedule& sched,
                  std::span<const int> sub_indices, int j_start, const Vec& a_init,
                  std::span<const double> cond, ChainTrace* trace = nullptr);

// Exact reverse-mode gradient of the chain: given dL/da0, accumulates
// denoiser parameter gradients and (optionally) the conditioning gradient.
void chain_backward(const Denoiser& denoiser, const NoiseSchedule& sched,
                    std::span<const int> sub_indices, int j_start, const ChainTrace& trace,
                    const Vec& dl_da0, nnet::Mlp::Grads& grads, Vec* cond_grad = nullptr);

}  // namespace drip::diffusion
