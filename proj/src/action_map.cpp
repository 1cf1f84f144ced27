#include <cmath>

#include "drip/harness.hpp"
#include "drip/parallel.hpp"

namespace drip::harness {

double ActionMap::feasible_fraction() const {
  if (cells.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) n += c.feasible ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(cells.size());
}

sim::Scenario case_study_scenario() {
  sim::ScenarioGenConfig gen;
  sim::Scenario s = sim::generate_scenario(4242, sim::Difficulty::Medium,
                                           sim::SlotKind::Vertical, gen);
  return s;
}

geom::Pose case_study_pose(const sim::Scenario& s, const sim::EnvConfig& env) {
  // An aisle pose whose local action space splits into a feasible band and
  // an infeasible remainder; the pose itself must not be connectable yet.
  const auto fp = env.vehicle.footprint();
  Rng rng(s.obstacles.size() + 17);
  for (int attempt = 0; attempt < 8000; ++attempt) {
    const geom::Pose pose(s.slot.target.x + rng.uniform(-5.0, 5.0),
                          rng.uniform(-0.6, 2.5), rng.uniform(-0.35, 0.35));
    bool clear = true;
    for (const auto& obs : s.obstacles)
      if (geom::collides(fp.at(pose), obs)) {
        clear = false;
        break;
      }
    if (!clear) continue;
    if (geom::rs_one_switch_feasible(pose, s.slot.target, env.turn_radius(), s.obstacles, fp,
                                     env.sweep_ds)
            .feasible)
      continue;
    ActionMap probe = compute_action_map(s, pose, env, 10);
    const double frac = probe.feasible_fraction();
    if (frac >= 0.05 && frac <= 0.6) return pose;
  }
  throw std::runtime_error("case_study_pose: no banded pose found");
}

ActionMap compute_action_map(const sim::Scenario& s, const geom::Pose& pose,
                             const sim::EnvConfig& env_cfg, int grid) {
  ActionMap map;
  map.scenario = s;
  map.pose = pose;
  map.grid = grid;
  map.cells.resize(static_cast<std::size_t>(grid) * grid);
  const auto fp = env_cfg.vehicle.footprint();

  parallel_for(map.cells.size(), 1, [&](std::size_t idx) {
    const int vi = static_cast<int>(idx) / grid;
    const int si = static_cast<int>(idx) % grid;
    ActionMapCell& cell = map.cells[idx];
    cell.action.v =
        env_cfg.vehicle.v_min +
        (env_cfg.vehicle.v_max - env_cfg.vehicle.v_min) * (vi + 0.5) / grid;
    cell.action.steer =
        -env_cfg.vehicle.steer_max + 2.0 * env_cfg.vehicle.steer_max * (si + 0.5) / grid;

    const geom::Pose next = sim::kinematic_step(pose, cell.action, env_cfg.vehicle);
    // Sweep the probe motion itself.
    std::vector<geom::Pose> sweep;
    const int n = std::max(
        2, static_cast<int>(std::ceil(geom::position_error(pose, next) / env_cfg.sweep_ds)));
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      sweep.emplace_back(pose.x + t * (next.x - pose.x), pose.y + t * (next.y - pose.y),
                         pose.theta + t * geom::heading_error(next, pose));
    }
    if (geom::swept_collision(sweep, fp, s.obstacles)) {
      cell.collided = true;
      return;
    }
    const auto res = geom::rs_one_switch_feasible(next, s.slot.target, env_cfg.turn_radius(),
                                                  s.obstacles, fp, env_cfg.sweep_ds);
    cell.feasible = res.feasible;
    cell.remaining_length = res.feasible ? res.remaining_length : 0.0;
  });
  return map;
}

}  // namespace drip::harness
