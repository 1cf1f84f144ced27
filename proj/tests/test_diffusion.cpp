#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "drip/diffusion.hpp"
#include "drip/rng.hpp"
#include "oracles.hpp"

using namespace drip;
using namespace drip::diffusion;

namespace {

Vec random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

// Denoiser that outputs a fixed vector regardless of input.
Denoiser constant_denoiser(const Vec& value, std::size_t cond_dim) {
  Rng rng(1);
  Denoiser d = Denoiser::create(value.size(), 8, cond_dim, {4}, rng);
  for (auto& l : d.net.layers) {
    std::fill(l.w.data.begin(), l.w.data.end(), 0.0);
    std::fill(l.b.data.begin(), l.b.data.end(), 0.0);
  }
  d.net.layers.back().b.data = value;
  return d;
}

}  // namespace

TEST_CASE("schedules: alpha_bar starts at 1, decreases strictly, matches recomputed products") {
  for (auto kind : {NoiseSchedule::Kind::Cosine, NoiseSchedule::Kind::Linear}) {
    for (int K : {25, 100}) {
      const NoiseSchedule s = build_schedule(kind, K);
      CHECK(s.alpha_bar[0] == 1.0);
      double prod = 1.0;
      for (int k = 1; k <= K; ++k) {
        CHECK(s.beta[static_cast<std::size_t>(k)] > 0.0);
        CHECK(s.beta[static_cast<std::size_t>(k)] <= 0.999);
        CHECK(s.alpha_bar[static_cast<std::size_t>(k)] < s.alpha_bar[static_cast<std::size_t>(k - 1)]);
        prod *= 1.0 - s.beta[static_cast<std::size_t>(k)];
        CHECK(std::abs(prod - s.alpha_bar[static_cast<std::size_t>(k)]) < 1e-12);
      }
    }
  }
}

TEST_CASE("schedules: linear endpoints hit the configured beta range") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Linear, 100, 1e-4, 0.02);
  CHECK(s.beta[1] == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(s.beta[100] == doctest::Approx(0.02).epsilon(1e-12));
}

TEST_CASE("schedules: cosine table matches the closed form away from the clip") {
  const int K = 100;
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, K);
  const double base = std::cos((0.008 / 1.008) * (M_PI / 2.0));
  for (int k = 1; k <= 95; ++k) {
    const double angle = ((static_cast<double>(k) / K + 0.008) / 1.008) * (M_PI / 2.0);
    const double want = std::pow(std::cos(angle) / base, 2.0);
    CHECK(s.alpha_bar[static_cast<std::size_t>(k)] == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("select_truncation: boundary clamps and the Table-scale anchor") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 25);
  CHECK(select_truncation(s, 10.0) == 25);
  CHECK(select_truncation(s, 1e-9) == 1);
  CHECK(select_truncation(s, 0.32) == 5);  // 25-step cosine grid
  // Exact hit keeps the same index.
  CHECK(select_truncation(s, s.sqrt_one_minus_ab(5)) == 5);
  // sqrt(1 - alpha_bar) is strictly increasing, so the argmin is unique up to
  // float ties.
  for (int k = 2; k <= 25; ++k) CHECK(s.sqrt_one_minus_ab(k) > s.sqrt_one_minus_ab(k - 1));
}

TEST_CASE("coefficients: endpoint identities and recompute cross-check") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  const int k_star = 20;
  CHECK(coefficients(0, s, k_star).w1 == 0.0);
  CHECK(coefficients(0, s, k_star).w2 == 1.0);
  CHECK(coefficients(k_star, s, k_star).w1 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(coefficients(k_star, s, k_star).w2 == doctest::Approx(0.0).epsilon(1e-15));
  for (int k = 0; k <= 100; ++k) {
    const auto c = coefficients(k, s, k_star);
    CHECK(c.w1 + c.w2 == doctest::Approx(1.0).epsilon(1e-15));
  }
  // Independent recompute of w1 at k=10 from a fresh product table.
  double ab10 = 1.0, ab20 = 1.0;
  for (int k = 1; k <= 20; ++k) {
    ab20 *= 1.0 - s.beta[static_cast<std::size_t>(k)];
    if (k <= 10) ab10 *= 1.0 - s.beta[static_cast<std::size_t>(k)];
  }
  const double w1_want = std::sqrt((1.0 - ab10) / (1.0 - ab20));
  CHECK(coefficients(10, s, k_star).w1 == doctest::Approx(w1_want).epsilon(1e-12));
}

TEST_CASE("coefficients: ratio bound holds with U = 1/sqrt(1-ab(k*)) and U is about 3") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  const int k_star = 20;  // k*/K = 0.2
  const double U = 1.0 / s.sqrt_one_minus_ab(k_star);
  for (int k = 1; k <= 100; ++k) {
    const auto c = coefficients(k, s, k_star);
    CHECK(std::abs(c.w1) / s.sqrt_one_minus_ab(k) <= U + 1e-12);
    CHECK(std::abs(1.0 - c.w2) / s.sqrt_one_minus_ab(k) <= U + 1e-12);
  }
  CHECK(U > 2.8);
  CHECK(U < 3.4);
}

TEST_CASE("mean_schedule: boundary values and fixed point") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec a0 = random_vec(rng, 2);
    const Vec mu = random_vec(rng, 2);
    const int k_star = rng.uniform_int(2, 60);
    const Vec m0 = mean_schedule(0, a0, mu, s, k_star);
    const Vec ms = mean_schedule(k_star, a0, mu, s, k_star);
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(m0[static_cast<std::size_t>(i)] - a0[static_cast<std::size_t>(i)]) < 1e-12);
      CHECK(std::abs(ms[static_cast<std::size_t>(i)] - mu[static_cast<std::size_t>(i)]) < 1e-12);
    }
    // Interpolation fixed point.
    for (int k : {0, 5, k_star, 80}) {
      const Vec fixed = mean_schedule(k, a0, a0, s, k_star);
      for (int i = 0; i < 2; ++i)
        CHECK(std::abs(fixed[static_cast<std::size_t>(i)] - a0[static_cast<std::size_t>(i)]) < 1e-12);
    }
  }
}

TEST_CASE("forward_standard: zero-noise scaling and Monte-Carlo std") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  const Vec a0{0.4, -0.7};
  const Vec zero{0.0, 0.0};
  const Vec at = forward_standard(a0, 30, s, zero);
  CHECK(at[0] == doctest::Approx(s.sqrt_ab(30) * a0[0]).epsilon(1e-15));
  // Small k with a mild schedule keeps a_k close to a0.
  const Vec a1 = forward_standard(a0, 1, s, zero);
  CHECK(std::abs(a1[0] - a0[0]) < 1e-3);

  Rng rng(17);
  const int k = 40, n = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec eps{rng.normal(), rng.normal()};
    const Vec a = forward_standard(a0, k, s, eps);
    sum += a[0];
    sum2 += a[0] * a[0];
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sum2 / n - mean * mean);
  CHECK(stddev == doctest::Approx(s.sqrt_one_minus_ab(k)).epsilon(0.03));
}

TEST_CASE("forward_aligned: endpoint mean, reduction to standard, and marginal match") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 25);
  const int k_star = 5;
  const double sigma_rl = s.sqrt_one_minus_ab(k_star);  // Eq-consistent prior std
  const Vec a0{0.3, -0.2};
  const Vec mu{-0.5, 0.6};
  const Vec zero{0.0, 0.0};

  const Vec at = forward_aligned(a0, mu, k_star, s, k_star, zero);
  for (int i = 0; i < 2; ++i)
    CHECK(at[static_cast<std::size_t>(i)] ==
          doctest::Approx(s.sqrt_ab(k_star) * mu[static_cast<std::size_t>(i)]).epsilon(1e-12));

  Rng rng(5);
  for (int k = 1; k <= 25; ++k) {
    const Vec eps{rng.normal(), rng.normal()};
    const Vec lhs = forward_aligned(a0, a0, k, s, k_star, eps);
    const Vec rhs = forward_standard(a0, k, s, eps);
    for (int i = 0; i < 2; ++i)
      CHECK(std::abs(lhs[static_cast<std::size_t>(i)] - rhs[static_cast<std::size_t>(i)]) < 1e-15);
  }

  // Monte-Carlo moments at the truncation step.
  const int n = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec eps{rng.normal(), rng.normal()};
    const Vec a = forward_aligned(a0, mu, k_star, s, k_star, eps);
    sum += a[1];
    sum2 += a[1] * a[1];
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sum2 / n - mean * mean);
  CHECK(stddev == doctest::Approx(sigma_rl).epsilon(0.03));
  const double se = sigma_rl / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - s.sqrt_ab(k_star) * mu[1]) < 3.0 * se);
}

TEST_CASE("dp_loss_standard: oracle denoiser and zero denoiser") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  Rng rng(7);
  const std::size_t cond_dim = 3;
  std::vector<Vec> a0{random_vec(rng, 2)};
  std::vector<Vec> cond{random_vec(rng, cond_dim)};

  // All draws share one eps, so a constant denoiser is a perfect oracle.
  const Vec eps{0.37, -0.81};
  DiffusionBatchPlan plan;
  for (int k = 1; k <= 100; k += 7) plan.items.push_back({0, k, eps});

  const Denoiser perfect = constant_denoiser(eps, cond_dim);
  CHECK(dp_loss_standard(plan, perfect, a0, cond, s) < 1e-24);

  const Denoiser zero = constant_denoiser({0.0, 0.0}, cond_dim);
  Rng nrng(8);
  DiffusionBatchPlan noisy = sample_batch_plan(1, 1024, 100, 2, nrng);
  const double loss = dp_loss_standard(noisy, zero, a0, cond, s);
  CHECK(loss == doctest::Approx(2.0).epsilon(0.15));  // E||eps||^2 = action_dim
}

TEST_CASE("dp_loss_aligned: reduction equivalence and oracle target") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  const int k_star = 20;
  Rng rng(9);
  const std::size_t cond_dim = 3;

  // mu_RL == a0 kills the extra term: losses agree on shared draws.
  std::vector<Vec> a0, mu, cond;
  for (int i = 0; i < 16; ++i) {
    a0.push_back(random_vec(rng, 2));
    mu.push_back(a0.back());
    cond.push_back(random_vec(rng, cond_dim));
  }
  DiffusionBatchPlan plan = sample_batch_plan(a0.size(), 256, 100, 2, rng);
  Rng drng(10);
  Denoiser net = Denoiser::create(2, 8, cond_dim, {16}, drng);
  const double std_loss = dp_loss_standard(plan, net, a0, cond, s);
  const double ali_loss = dp_loss_aligned(plan, net, a0, mu, cond, s, k_star);
  CHECK(std::abs(std_loss - ali_loss) < 1e-12);

  // Constant-batch oracle: denoiser emitting the exact modified target.
  std::vector<Vec> a0c{{0.2, -0.4}}, muc{{-0.6, 0.1}}, condc{random_vec(rng, cond_dim)};
  const Vec eps{0.9, -0.3};
  const int k = 12;
  DiffusionBatchPlan cplan;
  cplan.items.push_back({0, k, eps});
  const Vec target = aligned_target(eps, k, a0c[0], muc[0], s, k_star);
  const Denoiser oracle_net = constant_denoiser(target, cond_dim);
  CHECK(dp_loss_aligned(cplan, oracle_net, a0c, muc, condc, s, k_star) < 1e-24);
}

TEST_CASE("dp_loss_aligned: extra-term magnitude obeys the U bound for every k") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  const int k_star = 20;
  const double U = 1.0 / s.sqrt_one_minus_ab(k_star);
  Rng rng(11);
  const Vec a0 = random_vec(rng, 2);
  const Vec mu = random_vec(rng, 2);
  double diff_norm = 0.0;
  for (int i = 0; i < 2; ++i)
    diff_norm += (mu[static_cast<std::size_t>(i)] - a0[static_cast<std::size_t>(i)]) *
                 (mu[static_cast<std::size_t>(i)] - a0[static_cast<std::size_t>(i)]);
  diff_norm = std::sqrt(diff_norm);
  const Vec zero{0.0, 0.0};
  for (int k = 1; k <= 100; ++k) {
    const Vec target = aligned_target(zero, k, a0, mu, s, k_star);
    double extra = std::sqrt(target[0] * target[0] + target[1] * target[1]);
    CHECK(extra <= U * s.sqrt_ab(k) * diff_norm + 1e-12);
  }
}

TEST_CASE("ddim_predict_a0: inversion, zero-noise form, recomposition") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec a0 = random_vec(rng, 2);
    const Vec eps{rng.normal(), rng.normal()};
    const int k = rng.uniform_int(1, 100);
    const Vec a_k = forward_standard(a0, k, s, eps);
    const Vec rec = ddim_predict_a0(a_k, k, eps, s);
    for (int i = 0; i < 2; ++i)
      CHECK(std::abs(rec[static_cast<std::size_t>(i)] - a0[static_cast<std::size_t>(i)]) < 1e-10);

    const Vec zero{0.0, 0.0};
    const Vec scaled = ddim_predict_a0(a_k, k, zero, s);
    for (int i = 0; i < 2; ++i)
      CHECK(scaled[static_cast<std::size_t>(i)] ==
            doctest::Approx(a_k[static_cast<std::size_t>(i)] / s.sqrt_ab(k)).epsilon(1e-12));

    // Recompose sqrt(ab) a0_hat + sqrt(1-ab) eps = a_k.
    const Vec rand_eps{rng.normal(), rng.normal()};
    const Vec a0_hat = ddim_predict_a0(a_k, k, rand_eps, s);
    for (int i = 0; i < 2; ++i) {
      const double recompose = s.sqrt_ab(k) * a0_hat[static_cast<std::size_t>(i)] +
                               s.sqrt_one_minus_ab(k) * rand_eps[static_cast<std::size_t>(i)];
      CHECK(std::abs(recompose - a_k[static_cast<std::size_t>(i)]) < 1e-12);
    }
  }
}

TEST_CASE("ddim_step: marginal preservation across every adjacent pair, k=1 returns a0_hat") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  Rng rng(15);
  const Vec a0 = random_vec(rng, 2);
  const Vec eps{rng.normal(), rng.normal()};
  for (int k = 1; k <= 100; ++k) {
    const Vec a_k = forward_standard(a0, k, s, eps);
    const Vec stepped = ddim_step(a_k, k, eps, s);
    const Vec want = k >= 2 ? forward_standard(a0, k - 1, s, eps) : a0;
    for (int i = 0; i < 2; ++i)
      CHECK(std::abs(stepped[static_cast<std::size_t>(i)] - want[static_cast<std::size_t>(i)]) < 1e-10);
  }
  // Determinism.
  const Vec a_k = forward_standard(a0, 50, s, eps);
  const Vec s1 = ddim_step(a_k, 50, eps, s);
  const Vec s2 = ddim_step(a_k, 50, eps, s);
  CHECK(s1[0] == s2[0]);
  CHECK(s1[1] == s2[1]);
}

TEST_CASE("ddpm reference formulas: degenerate k=1 identities") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Linear, 100);
  // Posterior variance vanishes at k=1 (alpha_bar^0 = 1).
  CHECK(ddpm_posterior_variance(1, s) == doctest::Approx(0.0));
  // At k=1 the reverse mean recovers the clean action under a perfect eps.
  Rng rng(16);
  const Vec a0 = random_vec(rng, 2);
  const Vec eps{rng.normal(), rng.normal()};
  const Vec a1 = forward_standard(a0, 1, s, eps);
  const Vec mu = ddpm_reverse_mean(a1, 1, eps, s);
  for (int i = 0; i < 2; ++i)
    CHECK(mu[static_cast<std::size_t>(i)] == doctest::Approx(a0[static_cast<std::size_t>(i)]).epsilon(1e-10));
}

TEST_CASE("ddim_subsequence: uniform stride for the Table defaults") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  const auto sub = ddim_subsequence(s, 25);
  REQUIRE(sub.size() == 25);
  CHECK(sub.front() == 4);
  CHECK(sub.back() == 100);
  for (std::size_t i = 1; i < sub.size(); ++i) CHECK(sub[i] - sub[i - 1] == 4);
  // k*/K = 0.2 on the inference grid lands on train index 20.
  CHECK(sub[4] == 20);
}

TEST_CASE("chain_forward: zero denoiser reduces to the closed-form rescaling chain") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  const auto sub = ddim_subsequence(s, 25);
  const int j_star = 5;
  const std::size_t cond_dim = 3;
  const Denoiser zero = constant_denoiser({0.0, 0.0}, cond_dim);
  const Vec cond(cond_dim, 0.1);
  const Vec a_init{0.4, -0.9};
  const Vec out = chain_forward(zero, s, sub, j_star, a_init, cond);
  const double k_star_train = sub[static_cast<std::size_t>(j_star - 1)];
  const double scale = 1.0 / s.sqrt_ab(static_cast<int>(k_star_train));
  for (int i = 0; i < 2; ++i)
    CHECK(out[static_cast<std::size_t>(i)] ==
          doctest::Approx(a_init[static_cast<std::size_t>(i)] * scale).epsilon(1e-12));

  // j_start = 0 returns the initial sample unmodified.
  const Vec same = chain_forward(zero, s, sub, 0, a_init, cond);
  CHECK(same[0] == a_init[0]);
  CHECK(same[1] == a_init[1]);
}

TEST_CASE("chain_forward + perfect oracle maps forward draws down the sub-grid") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 100);
  const auto sub = ddim_subsequence(s, 25);
  Rng rng(18);
  const Vec a0 = random_vec(rng, 2);
  const Vec eps{rng.normal(), rng.normal()};
  const std::size_t cond_dim = 2;
  const Denoiser oracle_net = constant_denoiser(eps, cond_dim);
  const Vec cond(cond_dim, 0.0);
  const int j_star = 5;
  const Vec a_init = forward_standard(a0, sub[static_cast<std::size_t>(j_star - 1)], s, eps);
  const Vec out = chain_forward(oracle_net, s, sub, j_star, a_init, cond);
  for (int i = 0; i < 2; ++i)
    CHECK(std::abs(out[static_cast<std::size_t>(i)] - a0[static_cast<std::size_t>(i)]) < 1e-10);
}

TEST_CASE("chain_backward: gradients through the unrolled chain match finite differences") {
  const NoiseSchedule s = build_schedule(NoiseSchedule::Kind::Cosine, 10);
  const auto sub = ddim_subsequence(s, 5);
  const int j_star = 2;
  const std::size_t cond_dim = 3;
  Rng rng(19);
  Denoiser net = Denoiser::create(2, 4, cond_dim, {8}, rng);
  REQUIRE(net.net.param_count() <= 500);

  Vec cond = random_vec(rng, cond_dim);
  const Vec a_init{0.7, -0.2};
  const Vec w{1.3, -0.8};  // linear loss L = w . a0

  auto loss_value = [&] {
    const Vec a0 = chain_forward(net, s, sub, j_star, a_init, cond);
    return w[0] * a0[0] + w[1] * a0[1];
  };

  ChainTrace trace;
  chain_forward(net, s, sub, j_star, a_init, cond, &trace);
  auto grads = net.net.zero_grads();
  Vec cond_grad;
  chain_backward(net, s, sub, j_star, trace, w, grads, &cond_grad);

  double max_rel = 0.0;
  for (std::size_t li = 0; li < net.net.layers.size(); ++li) {
    for (std::size_t i = 0; i < net.net.layers[li].w.size(); ++i) {
      const double fd = oracle::central_difference(loss_value, net.net.layers[li].w.data[i]);
      max_rel = std::max(max_rel, oracle::rel_error(grads.layers[li].w.data[i], fd));
    }
    for (std::size_t i = 0; i < net.net.layers[li].b.size(); ++i) {
      const double fd = oracle::central_difference(loss_value, net.net.layers[li].b.data[i]);
      max_rel = std::max(max_rel, oracle::rel_error(grads.layers[li].b.data[i], fd));
    }
  }
  for (std::size_t i = 0; i < cond.size(); ++i) {
    const double fd = oracle::central_difference(loss_value, cond[i]);
    max_rel = std::max(max_rel, oracle::rel_error(cond_grad[i], fd));
  }
  CHECK(max_rel < 1e-3);
}

TEST_CASE("sample_batch_plan: k is uniform and eps moments are standard normal") {
  Rng rng(21);
  const int K = 25;
  std::vector<int> counts(static_cast<std::size_t>(K) + 1, 0);
  double eps_sum = 0.0, eps_sum2 = 0.0;
  std::size_t n_eps = 0;
  const int plans = 1000, batch = 100;
  for (int p = 0; p < plans; ++p) {
    const auto plan = sample_batch_plan(50, batch, K, 2, rng);
    for (const auto& item : plan.items) {
      ++counts[static_cast<std::size_t>(item.k)];
      CHECK(item.index < 50);
      for (double e : item.eps) {
        eps_sum += e;
        eps_sum2 += e * e;
        ++n_eps;
      }
    }
  }
  const double n = static_cast<double>(plans) * batch;
  const double expected = n / K;
  const double sigma = std::sqrt(n * (1.0 / K) * (1.0 - 1.0 / K));
  for (int k = 1; k <= K; ++k)
    CHECK(std::abs(counts[static_cast<std::size_t>(k)] - expected) < 5.0 * sigma);
  const double eps_mean = eps_sum / static_cast<double>(n_eps);
  const double eps_var = eps_sum2 / static_cast<double>(n_eps) - eps_mean * eps_mean;
  CHECK(std::abs(eps_mean) < 5.0 / std::sqrt(static_cast<double>(n_eps)));
  CHECK(eps_var == doctest::Approx(1.0).epsilon(0.02));
}
