#include "drip/harness.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace drip::harness {

namespace {

struct Binding {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
T parse_number(const std::string& s) {
  std::istringstream is(s);
  T v{};
  is >> v;
  if (is.fail()) throw std::runtime_error("bad numeric config value: " + s);
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::runtime_error("bad boolean config value: " + s);
}

std::vector<Binding> bindings() {
  std::vector<Binding> b;
  auto add_u64 = [&b](const std::string& key, std::uint64_t ExperimentConfig::* f) {
    b.push_back({key, [f](const ExperimentConfig& c) { return std::to_string(c.*f); },
                 [f](ExperimentConfig& c, const std::string& v) { c.*f = parse_number<std::uint64_t>(v); }});
  };
  auto add_int = [&b](const std::string& key, auto getter, auto setter) {
    b.push_back({key,
                 [getter](const ExperimentConfig& c) { return std::to_string(getter(c)); },
                 [setter](ExperimentConfig& c, const std::string& v) { setter(c, parse_number<long>(v)); }});
  };
  auto add_dbl = [&b](const std::string& key, auto getter, auto setter) {
    b.push_back({key, [getter](const ExperimentConfig& c) { return fmt_double(getter(c)); },
                 [setter](ExperimentConfig& c, const std::string& v) { setter(c, parse_number<double>(v)); }});
  };
  auto add_bool = [&b](const std::string& key, auto getter, auto setter) {
    b.push_back({key,
                 [getter](const ExperimentConfig& c) { return getter(c) ? std::string("true") : std::string("false"); },
                 [setter](ExperimentConfig& c, const std::string& v) { setter(c, parse_bool(v)); }});
  };
  auto add_str = [&b](const std::string& key, auto getter, auto setter) {
    b.push_back({key, [getter](const ExperimentConfig& c) { return getter(c); },
                 [setter](ExperimentConfig& c, const std::string& v) { setter(c, v); }});
  };

#define GET(expr) [](const ExperimentConfig& c) { return c.expr; }
#define SET(expr) [](ExperimentConfig& c, auto v) { c.expr = v; }

  add_u64("run.seed", &ExperimentConfig::seed);
  add_str("run.out_dir", GET(out_dir), SET(out_dir));
  add_int("run.threads", GET(threads), SET(threads));
  add_int("run.n_seeds", GET(n_seeds), SET(n_seeds));

  add_u64("scenes.seed", &ExperimentConfig::scene_seed);
  add_int("scenes.normal", GET(scenes_normal), SET(scenes_normal));
  add_int("scenes.medium", GET(scenes_medium), SET(scenes_medium));
  add_int("scenes.hard", GET(scenes_hard), SET(scenes_hard));
  add_int("scenes.val_normal", GET(val_normal), SET(val_normal));
  add_int("scenes.val_medium", GET(val_medium), SET(val_medium));
  add_int("scenes.val_hard", GET(val_hard), SET(val_hard));
  add_int("scenes.test_normal", GET(test_normal), SET(test_normal));
  add_int("scenes.test_medium", GET(test_medium), SET(test_medium));
  add_int("scenes.test_hard", GET(test_hard), SET(test_hard));
  add_dbl("scenes.vertical_fraction", GET(vertical_fraction), SET(vertical_fraction));

  add_dbl("vehicle.wheelbase", GET(env.vehicle.wheelbase), SET(env.vehicle.wheelbase));
  add_dbl("vehicle.length", GET(env.vehicle.length), SET(env.vehicle.length));
  add_dbl("vehicle.width", GET(env.vehicle.width), SET(env.vehicle.width));
  add_dbl("vehicle.rear_overhang", GET(env.vehicle.rear_overhang), SET(env.vehicle.rear_overhang));
  add_dbl("vehicle.v_min", GET(env.vehicle.v_min), SET(env.vehicle.v_min));
  add_dbl("vehicle.v_max", GET(env.vehicle.v_max), SET(env.vehicle.v_max));
  add_dbl("vehicle.steer_max", GET(env.vehicle.steer_max), SET(env.vehicle.steer_max));
  add_dbl("vehicle.dt", GET(env.vehicle.dt), SET(env.vehicle.dt));

  add_int("obs.raster_size", GET(env.obs.raster_size), SET(env.obs.raster_size));
  add_dbl("obs.raster_cell", GET(env.obs.raster_cell), SET(env.obs.raster_cell));
  add_int("obs.ray_count", GET(env.obs.ray_count), SET(env.obs.ray_count));
  add_dbl("obs.max_range", GET(env.obs.max_range), SET(env.obs.max_range));

  add_int("env.budget", GET(env.budget), SET(env.budget));
  add_dbl("env.eps_pos", GET(env.eps_pos), SET(env.eps_pos));
  add_dbl("env.eps_heading", GET(env.eps_heading), SET(env.eps_heading));
  add_dbl("env.sweep_ds", GET(env.sweep_ds), SET(env.sweep_ds));
  add_dbl("env.rs_turn_radius", GET(env.rs_turn_radius), SET(env.rs_turn_radius));
  add_dbl("env.expansion_clearance", GET(env.expansion_clearance), SET(env.expansion_clearance));
  // Stand-in shaping; the reference protocol never specifies rewards.
  add_dbl("reward.progress", GET(env.reward.progress), SET(env.reward.progress));
  add_dbl("reward.step", GET(env.reward.step), SET(env.reward.step));
  add_dbl("reward.collision", GET(env.reward.collision), SET(env.reward.collision));
  add_dbl("reward.success", GET(env.reward.success), SET(env.reward.success));

  add_int("rl.pretrain_episodes", GET(sac.pretrain_episodes), SET(sac.pretrain_episodes));
  add_int("rl.max_env_steps", GET(sac.max_env_steps), SET(sac.max_env_steps));
  add_int("rl.warmup_steps", GET(sac.warmup_steps), SET(sac.warmup_steps));
  add_int("rl.batch", GET(sac.batch), SET(sac.batch));
  add_int("rl.update_every", GET(sac.update_every), SET(sac.update_every));
  add_dbl("rl.lr", GET(sac.lr), SET(sac.lr));
  add_dbl("rl.alpha_lr", GET(sac.alpha_lr), SET(sac.alpha_lr));
  add_dbl("rl.gamma", GET(sac.gamma), SET(sac.gamma));
  add_dbl("rl.tau", GET(sac.tau), SET(sac.tau));
  add_dbl("rl.target_entropy", GET(sac.target_entropy), SET(sac.target_entropy));
  add_dbl("rl.sigma_min", GET(sac.sigma_min), SET(sac.sigma_min));
  add_dbl("rl.sigma_max", GET(sac.sigma_max), SET(sac.sigma_max));
  add_dbl("rl.init_alpha", GET(sac.init_alpha), SET(sac.init_alpha));
  add_dbl("rl.curriculum_near_frac", GET(sac.curriculum_near_frac), SET(sac.curriculum_near_frac));
  add_dbl("rl.curriculum_near_radius", GET(sac.curriculum_near_radius), SET(sac.curriculum_near_radius));
  add_bool("rl.use_expansion", GET(sac.use_expansion), SET(sac.use_expansion));
  add_int("rl.replay_capacity", GET(sac.replay_capacity), SET(sac.replay_capacity));
  add_int("rl.raster_pool", GET(sac.raster_pool), SET(sac.raster_pool));

  add_int("collect.rollouts_per_scene", GET(collect.rollouts_per_scene), SET(collect.rollouts_per_scene));
  add_bool("collect.use_expansion", GET(collect.use_expansion), SET(collect.use_expansion));

  add_int("diffusion.train_steps", GET(diffusion.train_steps), SET(diffusion.train_steps));
  add_int("diffusion.inference_steps", GET(diffusion.inference_steps), SET(diffusion.inference_steps));
  add_str("diffusion.schedule", GET(diffusion.schedule), SET(diffusion.schedule));
  add_dbl("diffusion.beta_lo", GET(diffusion.beta_lo), SET(diffusion.beta_lo));
  add_dbl("diffusion.beta_hi", GET(diffusion.beta_hi), SET(diffusion.beta_hi));
  add_int("diffusion.epochs", GET(diffusion.epochs), SET(diffusion.epochs));
  add_int("diffusion.batch", GET(diffusion.batch), SET(diffusion.batch));
  add_dbl("diffusion.lr", GET(diffusion.lr), SET(diffusion.lr));
  add_dbl("diffusion.encoder_lr", GET(diffusion.encoder_lr), SET(diffusion.encoder_lr));
  add_dbl("diffusion.weight_decay", GET(diffusion.weight_decay), SET(diffusion.weight_decay));
  add_str("diffusion.kstar_mode", GET(diffusion.kstar_mode), SET(diffusion.kstar_mode));
  add_int("diffusion.kstar", GET(diffusion.kstar), SET(diffusion.kstar));
  add_str("diffusion.sigma_reduction", GET(diffusion.sigma_reduction), SET(diffusion.sigma_reduction));
  add_bool("diffusion.scaled_mean_init", GET(diffusion.scaled_mean_init), SET(diffusion.scaled_mean_init));
  add_dbl("diffusion.lambda", GET(diffusion.lambda), SET(diffusion.lambda));
  add_dbl("diffusion.gamma", GET(diffusion.gamma), SET(diffusion.gamma));
  add_dbl("diffusion.critic_lr", GET(diffusion.critic_lr), SET(diffusion.critic_lr));
  add_dbl("diffusion.critic_tau", GET(diffusion.critic_tau), SET(diffusion.critic_tau));
  add_int("diffusion.temb_dim", GET(diffusion.temb_dim), SET(diffusion.temb_dim));

  add_int("eval.repeats", GET(eval_repeats), SET(eval_repeats));
  add_bool("eval.expansion", GET(eval_expansion), SET(eval_expansion));

#undef GET
#undef SET
  return b;
}

const std::vector<Binding>& binding_table() {
  static const std::vector<Binding> table = bindings();
  return table;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto z = s.find_last_not_of(" \t\r\n");
  return s.substr(a, z - a + 1);
}

void apply_line(ExperimentConfig& cfg, const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos)
    throw std::runtime_error("config line has no '=': " + line);
  cfg.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
}

void load_into(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path);
  const auto base = std::filesystem::path(path).parent_path();
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    if (t.rfind("include ", 0) == 0) {
      const std::string inc = trim(t.substr(8));
      load_into(cfg, (base / inc).string());
      continue;
    }
    apply_line(cfg, t);
  }
}

}  // namespace

void ExperimentConfig::apply(const std::string& key, const std::string& value) {
  for (const auto& b : binding_table()) {
    if (b.key == key) {
      b.set(*this, value);
      return;
    }
  }
  throw std::runtime_error("unknown config key: " + key);
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  for (const auto& b : binding_table()) os << b.key << " = " << b.get(*this) << "\n";
  return os.str();
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  if (!path.empty()) load_into(cfg, path);
  for (const auto& o : overrides) apply_line(cfg, o);
  return cfg;
}

ExperimentConfig config_from_overrides(const std::vector<std::string>& overrides) {
  return load_config("", overrides);
}

}  // namespace drip::harness
