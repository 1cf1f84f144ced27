#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "drip/harness.hpp"
#include "drip/scene_io.hpp"

namespace fs = std::filesystem;
using namespace drip;
using harness::ExperimentConfig;

namespace {

struct CommonOpts {
  std::string config;
  std::vector<std::string> sets;
};

ExperimentConfig resolve_config(const CommonOpts& c) {
  return harness::load_config(c.config, c.sets);
}

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config, "config file (flat key = value, include supported)");
  cmd->add_option("--set", c.sets, "override, e.g. --set run.seed=3")->take_all();
}

void write_config(const ExperimentConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "config.resolved");
  out << cfg.serialize();
}

int protected_main(int argc, char** argv) {
  CLI::App app{"drip: diffusion-refined parking planner pipeline"};
  app.require_subcommand(1);

  CommonOpts common;

  // gen-scenes
  auto* gen = app.add_subcommand("gen-scenes", "emit the procedural scene set");
  std::string gen_out = "scenes";
  add_common(gen, common);
  gen->add_option("--out", gen_out, "output directory");
  gen->callback([&] {
    const ExperimentConfig cfg = resolve_config(common);
    const harness::SceneSet set = harness::generate_scene_set(cfg);
    harness::save_scene_set(set, gen_out);
    int bad = 0;
    for (const auto* split : {&set.train, &set.val, &set.test})
      for (const auto& s : *split)
        if (!sim::validate_scenario(s, cfg.env.vehicle).ok) ++bad;
    std::printf("wrote %zu train / %zu val / %zu test scenes to %s (%d invalid)\n",
                set.train.size(), set.val.size(), set.test.size(), gen_out.c_str(), bad);
    if (bad > 0) throw std::runtime_error("scene validation failed");
  });

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "SAC pretraining of the prior policy");
  std::string pre_scenes = "scenes/train", pre_out = "runs/run0";
  add_common(pre, common);
  pre->add_option("--scenes", pre_scenes, "training scene directory");
  pre->add_option("--out", pre_out, "run directory");
  pre->callback([&] {
    ExperimentConfig cfg = resolve_config(common);
    write_config(cfg, pre_out);
    const auto scenes = harness::load_scene_dir(pre_scenes);
    rl::SacConfig sac = cfg.sac;
    sac.threads = cfg.threads;
    const rl::SacResult res = rl::sac_train(scenes, cfg.env, sac, cfg.seed,
                                            [](long step, double ret) {
                                              std::printf("  step %ld, recent return %.2f\n",
                                                          step, ret);
                                            });
    res.policy.save((fs::path(pre_out) / "policy.ckpt.json").string());
    std::printf("pretrained on %zu scenes: %ld env steps, %ld updates, %ld episodes\n",
                scenes.size(), res.env_steps, res.updates, res.episodes);
  });

  // collect
  auto* col = app.add_subcommand("collect", "roll out the prior and keep successes");
  std::string col_scenes = "scenes/train", col_policy, col_out = "demos.jsonl";
  add_common(col, common);
  col->add_option("--scenes", col_scenes, "scene directory");
  col->add_option("--policy", col_policy, "policy checkpoint")->required();
  col->add_option("--out", col_out, "demo dataset file");
  col->callback([&] {
    const ExperimentConfig cfg = resolve_config(common);
    const auto scenes = harness::load_scene_dir(col_scenes);
    const rl::PolicyBundle policy =
        rl::PolicyBundle::load(col_policy, cfg.env.obs, cfg.env.vehicle);
    rl::CollectConfig cc = cfg.collect;
    cc.threads = cfg.threads;
    const rl::DemoDataset demos = rl::collect_demos(policy, scenes, cfg.env, cc, cfg.seed + 1);
    demos.save(col_out, col_scenes);
    std::printf("kept %zu episodes, %zu pairs -> %s\n", demos.episodes.size(),
                demos.pair_count(), col_out.c_str());
  });

  // train-dp / train-drip
  for (const bool aligned : {false, true}) {
    auto* tr = app.add_subcommand(aligned ? "train-drip" : "train-dp",
                                  aligned ? "prior-aligned diffusion training"
                                          : "standard diffusion training");
    static std::string demos_path, policy_path, out_path, encoder_init, paradigm;
    static double kstar_ratio;
    demos_path = "demos.jsonl";
    policy_path.clear();
    out_path = aligned ? "drip.ckpt.json" : "dp.ckpt.json";
    encoder_init = aligned ? "rl" : "scratch";
    paradigm = "il";
    kstar_ratio = 0.0;
    add_common(tr, common);
    tr->add_option("--demos", demos_path, "demo dataset");
    tr->add_option("--policy", policy_path, "prior policy checkpoint")->required();
    tr->add_option("--out", out_path, "output checkpoint");
    tr->add_option("--encoder-init", encoder_init, "rl | scratch");
    if (aligned) {
      tr->add_option("--paradigm", paradigm, "il | rl");
      tr->add_option("--kstar-ratio", kstar_ratio, "override k*/K on the inference grid");
    }
    tr->callback([&, aligned] {
      const ExperimentConfig cfg = resolve_config(common);
      const rl::DemoDataset demos = rl::DemoDataset::load(demos_path);
      const rl::PolicyBundle policy =
          rl::PolicyBundle::load(policy_path, cfg.env.obs, cfg.env.vehicle);
      std::optional<int> kstar;
      if (aligned && kstar_ratio > 0.0)
        kstar = std::max(1, static_cast<int>(std::llround(kstar_ratio *
                                                          cfg.diffusion.inference_steps)));
      const harness::DiffusionTrainResult res = harness::train_diffusion(
          demos, policy, cfg.env, cfg.diffusion,
          aligned ? harness::LossMode::Aligned : harness::LossMode::Standard,
          aligned && paradigm == "rl" ? harness::Paradigm::OfflineRL
                                      : harness::Paradigm::Imitation,
          encoder_init == "rl", cfg.seed + 2, cfg.threads, kstar);
      res.policy.save(out_path);
      std::printf("trained %s: %ld updates, final loss %.4f, k*=%d (train grid %d)\n",
                  out_path.c_str(), res.updates,
                  res.epoch_losses.empty() ? 0.0 : res.epoch_losses.back(),
                  res.policy.k_star_inf, res.policy.k_star_train);
    });
  }

  // eval
  auto* ev = app.add_subcommand("eval", "run the 50-step protocol for one planner");
  std::string ev_planner = "prior", ev_scenes = "scenes/train", ev_policy, ev_denoiser,
              ev_out = "report";
  add_common(ev, common);
  ev->add_option("--planner", ev_planner, "prior|dp|dp_rl_init|drip_il|drip_rl|prior_init_only");
  ev->add_option("--scenes", ev_scenes, "scene directory");
  ev->add_option("--policy", ev_policy, "prior policy checkpoint")->required();
  ev->add_option("--denoiser", ev_denoiser, "diffusion checkpoint (diffusion planners)");
  ev->add_option("--out", ev_out, "report path prefix");
  ev->callback([&] {
    const ExperimentConfig cfg = resolve_config(common);
    const auto scenes = harness::load_scene_dir(ev_scenes);
    const rl::PolicyBundle policy =
        rl::PolicyBundle::load(ev_policy, cfg.env.obs, cfg.env.vehicle);
    const harness::PlannerKind kind = harness::planner_from_string(ev_planner);
    std::optional<harness::DiffusionPolicy> dp;
    if (kind != harness::PlannerKind::Prior) {
      if (ev_denoiser.empty())
        throw std::runtime_error("planner " + ev_planner + " needs --denoiser");
      dp = harness::DiffusionPolicy::load(ev_denoiser, cfg.env.obs);
    }
    const harness::Planner planner =
        harness::make_planner(kind, &policy, dp ? &*dp : nullptr);
    const harness::EvalReport rep =
        harness::run_eval(planner, scenes, cfg.env, cfg.eval_repeats, cfg.eval_expansion,
                          cfg.seed + 3, cfg.threads);
    harness::save_report(rep, ev_out);
    std::fputs(rep.table().c_str(), stdout);
  });

  // action-map
  auto* am = app.add_subcommand("action-map", "feasibility map of the local action space");
  std::string am_out = "action_map", am_policy, am_dp, am_drip;
  int am_grid = 20;
  add_common(am, common);
  am->add_option("--out", am_out, "output path prefix");
  am->add_option("--grid", am_grid, "actions per axis");
  am->add_option("--policy", am_policy, "overlay prior samples from this checkpoint");
  am->add_option("--dp", am_dp, "overlay full-chain samples from this checkpoint");
  am->add_option("--drip", am_drip, "overlay truncated-chain samples from this checkpoint");
  am->callback([&] {
    const ExperimentConfig cfg = resolve_config(common);
    const sim::Scenario scene = harness::case_study_scenario();
    const geom::Pose pose = harness::case_study_pose(scene, cfg.env);
    const harness::ActionMap map = harness::compute_action_map(scene, pose, cfg.env, am_grid);
    std::vector<harness::ActionOverlay> overlays;
    std::optional<rl::PolicyBundle> policy;
    const sim::Observation obs = sim::observe(scene, pose, cfg.env.obs);
    if (!am_policy.empty()) {
      policy = rl::PolicyBundle::load(am_policy, cfg.env.obs, cfg.env.vehicle);
      harness::ActionOverlay ov{"prior", {}};
      Rng rng(cfg.seed);
      for (int i = 0; i < 200; ++i) ov.samples.push_back(policy->sample_prior(obs, rng).first);
      overlays.push_back(std::move(ov));
    }
    auto overlay_diffusion = [&](const std::string& path, const std::string& name,
                                 bool truncated) {
      if (path.empty() || !policy) return;
      const harness::DiffusionPolicy dp = harness::DiffusionPolicy::load(path, cfg.env.obs);
      harness::ActionOverlay ov{name, {}};
      Rng rng(cfg.seed + (truncated ? 1 : 2));
      for (int i = 0; i < 200; ++i) ov.samples.push_back(dp.act(obs, *policy, rng, truncated));
      overlays.push_back(std::move(ov));
    };
    overlay_diffusion(am_dp, "dp", false);
    overlay_diffusion(am_drip, "drip", true);
    harness::save_action_map(map, overlays, am_out);
    std::printf("feasible fraction: %.3f (%d cells) -> %s.{json,svg}\n",
                map.feasible_fraction(), am_grid * am_grid, am_out.c_str());
  });

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "run every stage end to end (resumable)");
  std::string pl_mode = "il";
  add_common(pl, common);
  pl->add_option("--mode", pl_mode, "il | rl (diffusion training paradigm)");
  pl->callback([&] {
    const ExperimentConfig cfg = resolve_config(common);
    const auto art = harness::run_pipeline(
        cfg, pl_mode == "rl" ? harness::Paradigm::OfflineRL : harness::Paradigm::Imitation, {});
    for (const auto& [arm, rep] : art.reports) std::fputs(rep.table().c_str(), stdout);
  });

  // ablate
  auto* ab = app.add_subcommand("ablate", "truncation-ratio ablation table");
  std::vector<double> ab_ratios{0.1, 0.2, 0.4};
  add_common(ab, common);
  ab->add_option("--ratios", ab_ratios, "k*/K ratios")->take_all();
  ab->callback([&] {
    const ExperimentConfig cfg = resolve_config(common);
    const auto rows = harness::run_truncation_ablation(cfg, ab_ratios);
    const std::string table = harness::ablation_table(rows);
    std::fputs(table.c_str(), stdout);
    fs::create_directories(cfg.out_dir);
    std::ofstream out(fs::path(cfg.out_dir) / "ablation.txt");
    out << table;
    std::ofstream csv(fs::path(cfg.out_dir) / "ablation.csv");
    csv << "method,ratio,hard,medium,normal,avg\n";
    for (const auto& r : rows)
      csv << r.method << "," << r.ratio << "," << r.report.success_hard << ","
          << r.report.success_medium << "," << r.report.success_normal << ","
          << r.report.success_overall << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return protected_main(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "{\"error\": \"" << e.what() << "\"}\n";
    return 1;
  }
}
