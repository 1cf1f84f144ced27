#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "drip/harness.hpp"
#include "drip/parallel.hpp"
#include "drip/scene_io.hpp"

namespace drip::harness {

using json = nlohmann::ordered_json;

std::string to_string(PlannerKind k) {
  switch (k) {
    case PlannerKind::Prior: return "prior";
    case PlannerKind::Dp: return "dp";
    case PlannerKind::DpRlInit: return "dp_rl_init";
    case PlannerKind::DripIl: return "drip_il";
    case PlannerKind::DripRl: return "drip_rl";
    case PlannerKind::PriorInitOnly: return "prior_init_only";
  }
  return "prior";
}

PlannerKind planner_from_string(const std::string& s) {
  if (s == "prior") return PlannerKind::Prior;
  if (s == "dp") return PlannerKind::Dp;
  if (s == "dp_rl_init") return PlannerKind::DpRlInit;
  if (s == "drip_il") return PlannerKind::DripIl;
  if (s == "drip_rl") return PlannerKind::DripRl;
  if (s == "prior_init_only") return PlannerKind::PriorInitOnly;
  throw std::runtime_error("unknown planner: " + s);
}

Planner make_planner(PlannerKind kind, const rl::PolicyBundle* prior,
                     const DiffusionPolicy* dp) {
  Planner p;
  p.name = to_string(kind);
  switch (kind) {
    case PlannerKind::Prior:
      p.act = [prior](const sim::Observation& o, Rng& rng) {
        return prior->sample_prior(o, rng).first;
      };
      break;
    case PlannerKind::Dp:
    case PlannerKind::DpRlInit:
      p.act = [prior, dp](const sim::Observation& o, Rng& rng) {
        return dp->act(o, *prior, rng, /*truncated=*/false);
      };
      break;
    case PlannerKind::DripIl:
    case PlannerKind::DripRl:
    case PlannerKind::PriorInitOnly:
      p.act = [prior, dp](const sim::Observation& o, Rng& rng) {
        return dp->act(o, *prior, rng, /*truncated=*/true);
      };
      break;
  }
  return p;
}

EvalReport run_eval(const Planner& planner, const std::vector<sim::Scenario>& scenes,
                    const sim::EnvConfig& env_cfg, int repeats, bool expansions,
                    std::uint64_t seed, int threads) {
  EvalReport rep;
  rep.planner = planner.name;
  const std::size_t total = scenes.size() * static_cast<std::size_t>(repeats);
  rep.episodes.resize(total);
  const Rng root(seed);

  parallel_for(total, threads, [&](std::size_t idx) {
    const std::size_t si = idx / static_cast<std::size_t>(repeats);
    const int repeat = static_cast<int>(idx % static_cast<std::size_t>(repeats));
    Rng rng = root.substream("eval-episode", idx);

    sim::Episode ep(scenes[si], env_cfg);
    sim::Observation obs = ep.observation();
    double infer_ms = 0.0;
    long infer_calls = 0;
    while (!ep.is_terminal()) {
      if (expansions) {
        if (const auto seq = sim::analytic_expansion(ep)) {
          for (const auto& a : *seq) {
            if (ep.is_terminal()) break;
            ep.step(a);
          }
          continue;
        }
      }
      const auto t0 = std::chrono::steady_clock::now();
      const sim::Action act = planner.act(obs, rng);
      infer_ms += std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
      ++infer_calls;
      obs = ep.step(act).next_obs;
    }

    EpisodeOutcome& out = rep.episodes[idx];
    out.scenario_id = scenes[si].id;
    out.difficulty = scenes[si].difficulty;
    out.repeat = repeat;
    out.terminal = ep.terminal();
    out.success = ep.terminal() == sim::Terminal::Success;
    out.steps = ep.steps();
    out.gear_changes = ep.gear_changes();
    out.inference_ms = infer_calls > 0 ? infer_ms / static_cast<double>(infer_calls) : 0.0;
  });

  rep.finalize();
  return rep;
}

void EvalReport::finalize() {
  double succ[3] = {0, 0, 0};
  double count[3] = {0, 0, 0};
  double overall = 0.0, steps_sum = 0.0, gear_sum = 0.0, ms_sum = 0.0;
  long ms_count = 0;
  for (const auto& e : episodes) {
    const int tier = e.difficulty == sim::Difficulty::Normal   ? 0
                     : e.difficulty == sim::Difficulty::Medium ? 1
                                                               : 2;
    succ[tier] += e.success ? 1.0 : 0.0;
    count[tier] += 1.0;
    overall += e.success ? 1.0 : 0.0;
    steps_sum += e.steps;
    gear_sum += e.gear_changes;
    if (e.inference_ms > 0.0) {
      ms_sum += e.inference_ms;
      ++ms_count;
    }
  }
  const double n = static_cast<double>(episodes.size());
  success_normal = count[0] > 0 ? 100.0 * succ[0] / count[0] : 0.0;
  success_medium = count[1] > 0 ? 100.0 * succ[1] / count[1] : 0.0;
  success_hard = count[2] > 0 ? 100.0 * succ[2] / count[2] : 0.0;
  success_overall = n > 0 ? 100.0 * overall / n : 0.0;
  mean_steps = n > 0 ? steps_sum / n : 0.0;
  mean_gear_changes = n > 0 ? gear_sum / n : 0.0;
  mean_inference_ms = ms_count > 0 ? ms_sum / static_cast<double>(ms_count) : 0.0;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << "planner: " << planner << "\n";
  char line[256];
  std::snprintf(line, sizeof(line),
                "  hard %6.1f%%  medium %6.1f%%  normal %6.1f%%  avg %6.1f%%\n", success_hard,
                success_medium, success_normal, success_overall);
  os << line;
  std::snprintf(line, sizeof(line),
                "  episodes %zu  mean steps %.1f  mean gear changes %.2f  inference %.2f ms\n",
                episodes.size(), mean_steps, mean_gear_changes, mean_inference_ms);
  os << line;
  return os.str();
}

std::string EvalReport::csv() const {
  std::ostringstream os;
  os << "scenario_id,difficulty,repeat,terminal,success,steps,gear_changes\n";
  for (const auto& e : episodes) {
    os << e.scenario_id << "," << sim::to_string(e.difficulty) << "," << e.repeat << ","
       << sim::to_string(e.terminal) << "," << (e.success ? 1 : 0) << "," << e.steps << ","
       << e.gear_changes << "\n";
  }
  return os.str();
}

std::uint64_t EvalReport::determinism_hash() const {
  // Timings are measurements, everything else must replay bit-identically.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  for (const auto& e : episodes) {
    for (char c : e.scenario_id) mix(static_cast<std::uint64_t>(c));
    mix(static_cast<std::uint64_t>(e.repeat));
    mix(static_cast<std::uint64_t>(e.terminal));
    mix(static_cast<std::uint64_t>(e.success));
    mix(static_cast<std::uint64_t>(e.steps));
    mix(static_cast<std::uint64_t>(e.gear_changes));
  }
  return h;
}

void save_report(const EvalReport& rep, const std::string& path_prefix) {
  {
    std::ofstream out(path_prefix + ".txt");
    out << rep.table();
  }
  {
    std::ofstream out(path_prefix + ".csv");
    out << rep.csv();
  }
  json j;
  j["planner"] = rep.planner;
  j["success_hard"] = rep.success_hard;
  j["success_medium"] = rep.success_medium;
  j["success_normal"] = rep.success_normal;
  j["success_overall"] = rep.success_overall;
  j["mean_steps"] = rep.mean_steps;
  j["mean_gear_changes"] = rep.mean_gear_changes;
  j["mean_inference_ms"] = rep.mean_inference_ms;
  j["determinism_hash"] = rep.determinism_hash();
  json eps = json::array();
  for (const auto& e : rep.episodes) {
    eps.push_back(json{{"scenario_id", e.scenario_id},
                       {"difficulty", sim::to_string(e.difficulty)},
                       {"repeat", e.repeat},
                       {"terminal", sim::to_string(e.terminal)},
                       {"success", e.success},
                       {"steps", e.steps},
                       {"gear_changes", e.gear_changes},
                       {"inference_ms", e.inference_ms}});
  }
  j["episodes"] = eps;
  std::ofstream out(path_prefix + ".json");
  out << j.dump(1) << "\n";
}

}  // namespace drip::harness
