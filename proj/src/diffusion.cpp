#include "drip/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drip::diffusion {

namespace {

constexpr double kCosineS = 0.008;

double cosine_alpha_bar(double t) {
  const double angle = ((t + kCosineS) / (1.0 + kCosineS)) * (M_PI / 2.0);
  const double base = std::cos((kCosineS / (1.0 + kCosineS)) * (M_PI / 2.0));
  const double c = std::cos(angle);
  return (c * c) / (base * base);
}

}  // namespace

NoiseSchedule build_schedule(NoiseSchedule::Kind kind, int K, double beta_lo, double beta_hi) {
  if (K < 1) throw std::runtime_error("build_schedule: K must be >= 1");
  NoiseSchedule s;
  s.kind = kind;
  s.K = K;
  s.beta_lo = beta_lo;
  s.beta_hi = beta_hi;
  s.beta.assign(static_cast<std::size_t>(K) + 1, 0.0);
  s.alpha.assign(static_cast<std::size_t>(K) + 1, 0.0);
  s.alpha_bar.assign(static_cast<std::size_t>(K) + 1, 0.0);
  s.alpha_bar[0] = 1.0;

  for (int k = 1; k <= K; ++k) {
    double beta = 0.0;
    if (kind == NoiseSchedule::Kind::Linear) {
      beta = K == 1 ? beta_lo : beta_lo + (beta_hi - beta_lo) * (k - 1) / static_cast<double>(K - 1);
    } else {
      const double hi = cosine_alpha_bar(static_cast<double>(k) / K);
      const double lo = cosine_alpha_bar(static_cast<double>(k - 1) / K);
      beta = 1.0 - hi / lo;
    }
    beta = std::clamp(beta, 1e-12, 0.999);
    s.beta[static_cast<std::size_t>(k)] = beta;
    s.alpha[static_cast<std::size_t>(k)] = 1.0 - beta;
    s.alpha_bar[static_cast<std::size_t>(k)] =
        s.alpha_bar[static_cast<std::size_t>(k - 1)] * (1.0 - beta);
  }
  return s;
}

NoiseSchedule::Kind schedule_kind_from_string(const std::string& str) {
  if (str == "cosine") return NoiseSchedule::Kind::Cosine;
  if (str == "linear") return NoiseSchedule::Kind::Linear;
  throw std::runtime_error("unknown schedule kind: " + str);
}

std::string to_string(NoiseSchedule::Kind k) {
  return k == NoiseSchedule::Kind::Cosine ? "cosine" : "linear";
}

std::vector<int> ddim_subsequence(const NoiseSchedule& sched, int n) {
  if (n < 1 || n > sched.K) throw std::runtime_error("ddim_subsequence: bad step count");
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) {
    idx[static_cast<std::size_t>(j - 1)] =
        static_cast<int>(std::llround(static_cast<double>(j) * sched.K / n));
  }
  idx.back() = sched.K;
  for (std::size_t i = 1; i < idx.size(); ++i) {
    if (idx[i] <= idx[i - 1]) idx[i] = idx[i - 1] + 1;
  }
  return idx;
}

int select_truncation(const NoiseSchedule& sched, double sigma) {
  int best = 1;
  double best_err = std::abs(sigma - sched.sqrt_one_minus_ab(1));
  for (int k = 2; k <= sched.K; ++k) {
    const double err = std::abs(sigma - sched.sqrt_one_minus_ab(k));
    if (err < best_err) {
      best = k;
      best_err = err;
    }
  }
  return best;
}

int select_truncation_subgrid(const NoiseSchedule& sched, std::span<const int> sub_indices,
                              double sigma) {
  int best = 1;
  double best_err = std::abs(sigma - sched.sqrt_one_minus_ab(sub_indices[0]));
  for (std::size_t j = 1; j < sub_indices.size(); ++j) {
    const double err = std::abs(sigma - sched.sqrt_one_minus_ab(sub_indices[j]));
    if (err < best_err) {
      best = static_cast<int>(j) + 1;
      best_err = err;
    }
  }
  return best;
}

Coefficients coefficients(int k, const NoiseSchedule& sched, int k_star) {
  if (k > k_star) return {1.0, 0.0};
  if (k <= 0) return {0.0, 1.0};
  const double w1 = std::sqrt((1.0 - sched.alpha_bar[static_cast<std::size_t>(k)]) /
                              (1.0 - sched.alpha_bar[static_cast<std::size_t>(k_star)]));
  return {w1, 1.0 - w1};
}

Vec mean_schedule(int k, const Vec& a0, const Vec& mu_rl, const NoiseSchedule& sched,
                  int k_star) {
  const auto [w1, w2] = coefficients(k, sched, k_star);
  Vec mu(a0.size());
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = w1 * mu_rl[i] + w2 * a0[i];
  return mu;
}

Vec forward_standard(const Vec& a0, int k, const NoiseSchedule& sched, const Vec& eps) {
  const double r = sched.sqrt_ab(k), s = sched.sqrt_one_minus_ab(k);
  Vec out(a0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r * a0[i] + s * eps[i];
  return out;
}

Vec forward_aligned(const Vec& a0, const Vec& mu_rl, int k, const NoiseSchedule& sched,
                    int k_star, const Vec& eps) {
  const Vec mu = mean_schedule(k, a0, mu_rl, sched, k_star);
  return forward_standard(mu, k, sched, eps);
}

Vec aligned_target(const Vec& eps, int k, const Vec& a0, const Vec& mu_rl,
                   const NoiseSchedule& sched, int k_star) {
  const Vec mu = mean_schedule(k, a0, mu_rl, sched, k_star);
  const double ab = sched.alpha_bar[static_cast<std::size_t>(k)];
  const double scale = std::sqrt(ab / (1.0 - ab));
  Vec out(eps.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps[i] + scale * (mu[i] - a0[i]);
  return out;
}

Vec ddpm_reverse_mean(const Vec& a_k, int k, const Vec& eps_pred, const NoiseSchedule& sched) {
  const double beta = sched.beta[static_cast<std::size_t>(k)];
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[static_cast<std::size_t>(k)]);
  const double coef = beta / sched.sqrt_one_minus_ab(k);
  Vec out(a_k.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = inv_sqrt_alpha * (a_k[i] - coef * eps_pred[i]);
  return out;
}

double ddpm_posterior_variance(int k, const NoiseSchedule& sched) {
  const double ab_prev = sched.alpha_bar[static_cast<std::size_t>(k - 1)];
  const double ab = sched.alpha_bar[static_cast<std::size_t>(k)];
  return (1.0 - ab_prev) / (1.0 - ab) * sched.beta[static_cast<std::size_t>(k)];
}

Vec ddim_predict_a0(const Vec& a_k, int k, const Vec& eps_pred, const NoiseSchedule& sched) {
  const double r = sched.sqrt_ab(k), s = sched.sqrt_one_minus_ab(k);
  Vec out(a_k.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (a_k[i] - s * eps_pred[i]) / r;
  return out;
}

Vec ddim_step(const Vec& a_k, int k, const Vec& eps_pred, const NoiseSchedule& sched) {
  return ddim_step_between(a_k, eps_pred, sched.alpha_bar[static_cast<std::size_t>(k)],
                           sched.alpha_bar[static_cast<std::size_t>(k - 1)]);
}

Vec ddim_step_between(const Vec& a, const Vec& eps_pred, double ab_from, double ab_to) {
  const double r_from = std::sqrt(ab_from), s_from = std::sqrt(1.0 - ab_from);
  const double r_to = std::sqrt(ab_to), s_to = std::sqrt(1.0 - ab_to);
  Vec out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a0_hat = (a[i] - s_from * eps_pred[i]) / r_from;
    out[i] = r_to * a0_hat + s_to * eps_pred[i];
  }
  return out;
}

Denoiser Denoiser::create(std::size_t action_dim, std::size_t temb_dim, std::size_t cond_dim,
                          std::vector<std::size_t> hidden, Rng& rng) {
  Denoiser d;
  d.action_dim = action_dim;
  d.temb_dim = temb_dim;
  d.cond_dim = cond_dim;
  std::vector<std::size_t> widths;
  widths.push_back(action_dim + temb_dim + cond_dim);
  for (std::size_t h : hidden) widths.push_back(h);
  widths.push_back(action_dim);
  d.net = nnet::Mlp::create(std::move(widths), nnet::Activation::Mish, rng);
  return d;
}

Vec Denoiser::assemble_input(const Vec& a_k, int k, std::span<const double> cond) const {
  Vec in;
  in.reserve(input_dim());
  in.insert(in.end(), a_k.begin(), a_k.end());
  const Vec temb = nnet::sinusoidal_embedding(static_cast<double>(k), temb_dim);
  in.insert(in.end(), temb.begin(), temb.end());
  in.insert(in.end(), cond.begin(), cond.end());
  return in;
}

Vec Denoiser::eval(const Vec& a_k, int k, std::span<const double> cond) const {
  return net.forward(assemble_input(a_k, k, cond));
}

Vec Denoiser::eval(const Vec& a_k, int k, std::span<const double> cond,
                   nnet::Mlp::Cache& cache) const {
  return net.forward(assemble_input(a_k, k, cond), cache);
}

DiffusionBatchPlan sample_batch_plan(std::size_t dataset_size, std::size_t batch, int K,
                                     std::size_t action_dim, Rng& rng) {
  DiffusionBatchPlan plan;
  plan.items.resize(batch);
  for (auto& item : plan.items) {
    item.index = rng.uniform_index(dataset_size);
    item.k = rng.uniform_int(1, K);
    item.eps.resize(action_dim);
    for (double& e : item.eps) e = rng.normal();
  }
  return plan;
}

double dp_loss_standard(const DiffusionBatchPlan& plan, const Denoiser& denoiser,
                        const std::vector<Vec>& a0, const std::vector<Vec>& cond,
                        const NoiseSchedule& sched) {
  double loss = 0.0;
  for (const auto& item : plan.items) {
    const Vec a_k = forward_standard(a0[item.index], item.k, sched, item.eps);
    const Vec eps_hat = denoiser.eval(a_k, item.k, cond[item.index]);
    for (std::size_t i = 0; i < eps_hat.size(); ++i) {
      const double d = item.eps[i] - eps_hat[i];
      loss += d * d;
    }
  }
  return loss / static_cast<double>(plan.items.size());
}

double dp_loss_aligned(const DiffusionBatchPlan& plan, const Denoiser& denoiser,
                       const std::vector<Vec>& a0, const std::vector<Vec>& mu_rl,
                       const std::vector<Vec>& cond, const NoiseSchedule& sched, int k_star) {
  double loss = 0.0;
  for (const auto& item : plan.items) {
    const Vec a_k = forward_aligned(a0[item.index], mu_rl[item.index], item.k, sched, k_star,
                                    item.eps);
    const Vec target = aligned_target(item.eps, item.k, a0[item.index], mu_rl[item.index],
                                      sched, k_star);
    const Vec eps_hat = denoiser.eval(a_k, item.k, cond[item.index]);
    for (std::size_t i = 0; i < eps_hat.size(); ++i) {
      const double d = target[i] - eps_hat[i];
      loss += d * d;
    }
  }
  return loss / static_cast<double>(plan.items.size());
}

Vec chain_forward(const Denoiser& denoiser, const NoiseSchedule& sched,
                  std::span<const int> sub_indices, int j_start, const Vec& a_init,
                  std::span<const double> cond, ChainTrace* trace) {
  Vec a = a_init;
  if (trace) {
    trace->a.assign(static_cast<std::size_t>(j_start) + 1, Vec{});
    trace->caches.assign(static_cast<std::size_t>(j_start) + 1, {});
    trace->eps_out.assign(static_cast<std::size_t>(j_start) + 1, Vec{});
    trace->a[static_cast<std::size_t>(j_start)] = a;
  }
  for (int j = j_start; j >= 1; --j) {
    const int k_train = sub_indices[static_cast<std::size_t>(j - 1)];
    const double ab_from = sched.alpha_bar[static_cast<std::size_t>(k_train)];
    const double ab_to =
        j >= 2 ? sched.alpha_bar[static_cast<std::size_t>(sub_indices[static_cast<std::size_t>(j - 2)])]
               : 1.0;
    Vec eps;
    if (trace) {
      eps = denoiser.eval(a, k_train, cond, trace->caches[static_cast<std::size_t>(j)]);
      trace->eps_out[static_cast<std::size_t>(j)] = eps;
    } else {
      eps = denoiser.eval(a, k_train, cond);
    }
    a = ddim_step_between(a, eps, ab_from, ab_to);
    if (trace) trace->a[static_cast<std::size_t>(j - 1)] = a;
  }
  return a;
}

void chain_backward(const Denoiser& denoiser, const NoiseSchedule& sched,
                    std::span<const int> sub_indices, int j_start, const ChainTrace& trace,
                    const Vec& dl_da0, nnet::Mlp::Grads& grads, Vec* cond_grad) {
  Vec g = dl_da0;  // gradient w.r.t. a_{j-1}, starting at j = 1
  for (int j = 1; j <= j_start; ++j) {
    const int k_train = sub_indices[static_cast<std::size_t>(j - 1)];
    const double ab_from = sched.alpha_bar[static_cast<std::size_t>(k_train)];
    const double ab_to =
        j >= 2 ? sched.alpha_bar[static_cast<std::size_t>(sub_indices[static_cast<std::size_t>(j - 2)])]
               : 1.0;
    const double r_from = std::sqrt(ab_from), s_from = std::sqrt(1.0 - ab_from);
    const double r_to = std::sqrt(ab_to), s_to = std::sqrt(1.0 - ab_to);
    const double c1 = r_to / r_from;
    const double c2 = s_to - r_to * s_from / r_from;

    Vec eps_up(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) eps_up[i] = c2 * g[i];
    Vec in_grad;
    denoiser.net.backward(trace.caches[static_cast<std::size_t>(j)], eps_up, grads, &in_grad);

    Vec g_next(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) g_next[i] = c1 * g[i] + in_grad[i];
    if (cond_grad) {
      const std::size_t off = denoiser.action_dim + denoiser.temb_dim;
      if (cond_grad->size() != denoiser.cond_dim) cond_grad->assign(denoiser.cond_dim, 0.0);
      for (std::size_t i = 0; i < denoiser.cond_dim; ++i) (*cond_grad)[i] += in_grad[off + i];
    }
    g = std::move(g_next);
  }
}

}  // namespace drip::diffusion
