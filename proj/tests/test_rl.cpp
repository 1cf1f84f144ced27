#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "drip/rl.hpp"
#include "drip/scene_io.hpp"
#include "oracles.hpp"

using namespace drip;
using namespace drip::rl;
using drip::sim::Difficulty;
using drip::sim::SlotKind;

namespace {

sim::EnvConfig default_env() { return sim::EnvConfig{}; }

std::vector<sim::Scenario> toy_scenes(int n, bool neighbors) {
  sim::ScenarioGenConfig gen;
  gen.neighbors = neighbors;
  gen.reject_trivial_start = neighbors;  // free space is trivially connectable
  std::vector<sim::Scenario> scenes;
  for (int i = 0; i < n; ++i)
    scenes.push_back(sim::generate_scenario(static_cast<std::uint64_t>(9000 + i),
                                            Difficulty::Normal,
                                            i % 2 ? SlotKind::Parallel : SlotKind::Vertical, gen));
  return scenes;
}

// Policy with hand-set head outputs: mu_raw and log-std raw constants.
PolicyBundle constant_policy(double mu0, double mu1, double ls_raw, double sigma_min = 0.05) {
  Rng rng(7);
  PolicyBundle p;
  p.encoder = ObsEncoder::create(sim::ObsConfig{}, 4, {16}, 8, rng);
  p.actor = nnet::Mlp::create({8, 4}, nnet::Activation::Relu, rng);
  for (auto& l : p.actor.layers) std::fill(l.w.data.begin(), l.w.data.end(), 0.0);
  p.actor.layers.back().b.data = {mu0, mu1, ls_raw, ls_raw};
  p.vehicle = sim::VehicleParams{};
  p.sigma_min = sigma_min;
  return p;
}

// Generated scene whose start is moved to a one-switch-feasible aisle pose,
// so expansions can complete episodes.
std::vector<sim::Scenario> expandable_scenes(int n) {
  std::vector<sim::Scenario> out;
  const sim::EnvConfig env;
  const auto fp = env.expansion_footprint();
  for (int i = 0; out.size() < static_cast<std::size_t>(n) && i < n * 4; ++i) {
    sim::Scenario s = sim::generate_scenario(static_cast<std::uint64_t>(500 + i),
                                             Difficulty::Normal,
                                             i % 2 ? SlotKind::Parallel : SlotKind::Vertical,
                                             sim::ScenarioGenConfig{});
    Rng rng(static_cast<std::uint64_t>(i));
    for (int att = 0; att < 200; ++att) {
      const geom::Pose probe(s.slot.target.x + rng.uniform(-3, 3), rng.uniform(-0.5, 2.5),
                             rng.uniform(-geom::kPi, geom::kPi));
      bool clear = true;
      for (const auto& obs : s.obstacles)
        if (geom::collides(fp.at(probe), obs)) { clear = false; break; }
      if (!clear) continue;
      const auto res = geom::rs_one_switch_feasible(probe, s.slot.target, env.turn_radius(),
                                                    s.obstacles, fp, env.sweep_ds);
      if (!res.feasible || res.remaining_length > 9.0) continue;
      s.start = probe;
      out.push_back(s);
      break;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("action normalization round-trips inside the bounds box") {
  const sim::VehicleParams veh;
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const sim::Action a{rng.uniform(veh.v_min, veh.v_max),
                        rng.uniform(-veh.steer_max, veh.steer_max)};
    const Vec n = normalize_action(a, veh);
    CHECK(std::abs(n[0]) <= 1.0 + 1e-12);
    CHECK(std::abs(n[1]) <= 1.0 + 1e-12);
    const sim::Action back = denormalize_action(n, veh);
    CHECK(back.v == doctest::Approx(a.v).epsilon(1e-12));
    CHECK(back.steer == doctest::Approx(a.steer).epsilon(1e-12));
  }
}

TEST_CASE("sample_prior: vanishing sigma gives the squashed mean deterministically") {
  // log-std raw at -40 rails the bounded log-std onto its floor.
  PolicyBundle p = constant_policy(0.3, -0.6, -40.0, 1e-9);
  const auto scene = toy_scenes(1, false).front();
  const sim::Observation obs = sim::observe(scene, scene.start, p.encoder.obs_cfg);
  Rng rng(3);
  const auto [act, prior] = p.sample_prior(obs, rng);
  CHECK(prior.sigma[0] <= 1e-8);
  const sim::Action want = denormalize_action({prior.mean[0], prior.mean[1]}, p.vehicle);
  CHECK(act.v == doctest::Approx(want.v).epsilon(1e-6));
  CHECK(act.steer == doctest::Approx(want.steer).epsilon(1e-6));
  CHECK(prior.mean[0] == doctest::Approx(std::tanh(0.3)).epsilon(1e-12));
}

TEST_CASE("sample_prior: fixed seed reproduces the sample") {
  PolicyBundle p = constant_policy(0.1, 0.2, 0.0);
  const auto scene = toy_scenes(1, false).front();
  const sim::Observation obs = sim::observe(scene, scene.start, p.encoder.obs_cfg);
  Rng r1(42), r2(42);
  const auto [a1, pr1] = p.sample_prior(obs, r1);
  const auto [a2, pr2] = p.sample_prior(obs, r2);
  CHECK(a1.v == a2.v);
  CHECK(a1.steer == a2.steer);
}

TEST_CASE("sample_prior: Monte-Carlo moments of the pre-clamp samples match the prior") {
  // Small sigma keeps every draw inside the box, so the executed action in
  // normalized space equals the pre-clamp sample.
  PolicyBundle p = constant_policy(0.05, -0.1, -1.2);
  const auto scene = toy_scenes(1, false).front();
  const sim::Observation obs = sim::observe(scene, scene.start, p.encoder.obs_cfg);
  const GaussianPrior prior = p.prior(obs);
  REQUIRE(prior.sigma[0] < 0.2);

  Rng rng(11);
  const int n = 10000;
  double sum[2] = {0, 0}, sum2[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const auto [act, pr] = p.sample_prior(obs, rng);
    const Vec a = normalize_action(act, p.vehicle);
    for (int d = 0; d < 2; ++d) {
      sum[d] += a[static_cast<std::size_t>(d)];
      sum2[d] += a[static_cast<std::size_t>(d)] * a[static_cast<std::size_t>(d)];
    }
  }
  for (int d = 0; d < 2; ++d) {
    const std::size_t sd = static_cast<std::size_t>(d);
    const double mean = sum[d] / n;
    const double stddev = std::sqrt(sum2[d] / n - mean * mean);
    const double se_mean = prior.sigma[sd] / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean - prior.mean[sd]) < 3.0 * se_mean);
    const double se_std = prior.sigma[sd] / std::sqrt(2.0 * n);
    CHECK(std::abs(stddev - prior.sigma[sd]) < 3.0 * se_std);
  }
}

TEST_CASE("policy checkpoints round-trip through the drip-ckpt container") {
  Rng rng(5);
  PolicyBundle p;
  p.encoder = ObsEncoder::create(sim::ObsConfig{}, 4, {32}, 16, rng);
  p.actor = nnet::Mlp::create({16, 8, 4}, nnet::Activation::Relu, rng);
  p.vehicle = sim::VehicleParams{};
  const std::string path =
      (std::filesystem::temp_directory_path() / "drip_policy_test.json").string();
  p.save(path);
  const PolicyBundle back = PolicyBundle::load(path, sim::ObsConfig{}, sim::VehicleParams{});
  std::remove(path.c_str());

  const auto scene = toy_scenes(1, false).front();
  const sim::Observation obs = sim::observe(scene, scene.start, p.encoder.obs_cfg);
  const GaussianPrior a = p.prior(obs);
  const GaussianPrior b = back.prior(obs);
  CHECK(a.mean[0] == b.mean[0]);
  CHECK(a.sigma[1] == b.sigma[1]);
}

TEST_CASE("twin critics: soft update blends target parameters exactly") {
  Rng rng(6);
  TwinCritics c = TwinCritics::create(8, 2, {16}, rng);
  c.tau = 0.25;
  // Make online and target diverge first.
  for (auto& l : c.q1.layers)
    for (double& w : l.w.data) w += 1.0;
  const nnet::Mlp old_target = c.q1_target;
  c.soft_update();
  for (std::size_t li = 0; li < c.q1.layers.size(); ++li)
    for (std::size_t i = 0; i < c.q1.layers[li].w.size(); ++i) {
      const double want =
          (1.0 - c.tau) * old_target.layers[li].w.data[i] + c.tau * c.q1.layers[li].w.data[i];
      CHECK(c.q1_target.layers[li].w.data[i] == want);
    }
}

TEST_CASE("sac_train: smoke run is finite, deterministic, and respects the sigma floor") {
  const auto scenes = toy_scenes(2, false);
  sim::EnvConfig env = default_env();
  SacConfig cfg;
  cfg.max_env_steps = 400;
  cfg.warmup_steps = 100;
  cfg.update_every = 4;
  cfg.batch = 32;

  const SacResult r1 = sac_train(scenes, env, cfg, 12345);
  const SacResult r2 = sac_train(scenes, env, cfg, 12345);
  CHECK(r1.env_steps == 400);
  CHECK(r1.updates > 0);
  CHECK(r1.episodes > 0);
  CHECK(r1.final_alpha > 0.0);
  for (std::size_t li = 0; li < r1.policy.actor.layers.size(); ++li)
    for (std::size_t i = 0; i < r1.policy.actor.layers[li].w.size(); ++i)
      CHECK(r1.policy.actor.layers[li].w.data[i] == r2.policy.actor.layers[li].w.data[i]);

  const auto scene = scenes.front();
  const sim::Observation obs = sim::observe(scene, scene.start, env.obs);
  const GaussianPrior prior = r1.policy.prior(obs);
  CHECK(prior.sigma[0] >= cfg.sigma_min - 1e-12);
  CHECK(prior.sigma[1] <= cfg.sigma_max + 1e-12);
}

TEST_CASE("collect_demos: colliding policy yields an empty dataset") {
  // Full-throttle straight policy into the slot's back wall neighborhood.
  PolicyBundle p = constant_policy(5.0, 0.0, -40.0, 1e-6);  // mu ~ tanh(5) ~ 1: full forward
  auto scenes = toy_scenes(1, true);
  // Point the start at the nearest wall so full-forward always collides.
  scenes[0].start = geom::Pose(0.0, 4.0, geom::kPi / 2.0);
  CollectConfig cc;
  cc.rollouts_per_scene = 3;
  cc.use_expansion = false;
  const DemoDataset ds = collect_demos(p, scenes, default_env(), cc, 1);
  CHECK(ds.episodes.empty());
  CHECK(ds.pair_count() == 0);
}

TEST_CASE("collect_demos: expansion-completed trivial scene is retained exactly once per rollout") {
  PolicyBundle p = constant_policy(0.0, 0.0, -2.0);
  // Start 2 m behind the slot target, aligned: one-switch feasible at step 0.
  sim::Scenario s;
  s.id = "trivial";
  s.bounds = geom::OrientedBox(geom::Pose(0, 0, 0), 100.0, 100.0);
  s.slot.target = geom::Pose(10, 0, 0);
  s.slot.rect = geom::OrientedBox(geom::Pose(11.4, 0, 0), 2.55, 1.15);
  s.start = geom::Pose(8, 0, 0);
  CollectConfig cc;
  cc.rollouts_per_scene = 2;
  const DemoDataset ds = collect_demos(p, {s}, default_env(), cc, 2);
  REQUIRE(ds.episodes.size() == 2);
  for (const auto& e : ds.episodes) {
    CHECK(e.scenario_id == "trivial");
    CHECK(e.steps.back().terminal);
  }
}

TEST_CASE("collect_demos: retained pair count equals the sum of success episode lengths") {
  const auto scenes = expandable_scenes(3);
  REQUIRE(!scenes.empty());
  PolicyBundle p = constant_policy(0.2, 0.0, -0.5);
  CollectConfig cc;
  cc.rollouts_per_scene = 4;
  const DemoDataset ds = collect_demos(p, scenes, default_env(), cc, 3);
  std::size_t recount = 0;
  for (const auto& e : ds.episodes) {
    CHECK(e.steps.size() <= 50);
    CHECK(e.steps.back().terminal);
    recount += e.steps.size();
  }
  CHECK(ds.pair_count() == recount);
}

TEST_CASE("demo records replay: re-simulating stored actions reproduces observations and success") {
  const auto scenes = expandable_scenes(2);
  REQUIRE(!scenes.empty());
  PolicyBundle p = constant_policy(0.1, 0.1, -0.7);
  CollectConfig cc;
  cc.rollouts_per_scene = 5;
  const DemoDataset ds = collect_demos(p, scenes, default_env(), cc, 4);
  REQUIRE(!ds.episodes.empty());
  for (const auto& e : ds.episodes) {
    const auto scene_it =
        std::find_if(scenes.begin(), scenes.end(), [&](const auto& s) { return s.id == e.scenario_id; });
    REQUIRE(scene_it != scenes.end());
    sim::Episode episode(*scene_it, default_env());
    sim::Observation obs = episode.observation();
    for (const auto& step : e.steps) {
      CHECK(obs.raster == step.obs.raster);
      CHECK(obs.rays == step.obs.rays);
      CHECK(obs.rel_x == step.obs.rel_x);
      const auto out = episode.step(step.action);
      obs = out.next_obs;
    }
    CHECK(episode.terminal() == sim::Terminal::Success);
  }
}

TEST_CASE("demo dataset files round-trip") {
  const auto scenes = expandable_scenes(1);
  REQUIRE(!scenes.empty());
  PolicyBundle p = constant_policy(0.1, 0.05, -0.6);
  CollectConfig cc;
  cc.rollouts_per_scene = 4;
  const DemoDataset ds = collect_demos(p, scenes, default_env(), cc, 5);
  REQUIRE(!ds.episodes.empty());
  const std::string path = (std::filesystem::temp_directory_path() / "drip_demos_test.jsonl").string();
  ds.save(path, "scenes/");
  const DemoDataset back = DemoDataset::load(path);
  std::remove(path.c_str());
  REQUIRE(back.episodes.size() == ds.episodes.size());
  CHECK(back.pair_count() == ds.pair_count());
  CHECK(back.episodes[0].steps[0].obs.raster == ds.episodes[0].steps[0].obs.raster);
  CHECK(back.episodes[0].steps[0].action.v == ds.episodes[0].steps[0].action.v);
  const auto tr = back.transitions();
  CHECK(tr.size() == back.pair_count());
  CHECK(tr.back().done);
}
