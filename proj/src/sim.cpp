#include "drip/sim.hpp"

#include <cmath>

namespace drip::sim {

using geom::normalize_angle;
using geom::OrientedBox;
using geom::Pose;
using geom::Vec2;

geom::Pose kinematic_step(const geom::Pose& p, Action a, const VehicleParams& params) {
  const double dx = a.v * std::cos(p.theta) * params.dt;
  const double dy = a.v * std::sin(p.theta) * params.dt;
  const double dtheta = a.v / params.wheelbase * std::tan(a.steer) * params.dt;
  return {p.x + dx, p.y + dy, p.theta + dtheta};
}

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Normal: return "normal";
    case Difficulty::Medium: return "medium";
    case Difficulty::Hard: return "hard";
  }
  return "normal";
}

std::string to_string(SlotKind k) { return k == SlotKind::Parallel ? "parallel" : "vertical"; }

Difficulty difficulty_from_string(const std::string& s) {
  if (s == "normal") return Difficulty::Normal;
  if (s == "medium") return Difficulty::Medium;
  if (s == "hard") return Difficulty::Hard;
  throw std::runtime_error("unknown difficulty: " + s);
}

SlotKind slot_kind_from_string(const std::string& s) {
  if (s == "parallel") return SlotKind::Parallel;
  if (s == "vertical") return SlotKind::Vertical;
  throw std::runtime_error("unknown slot kind: " + s);
}

std::string to_string(Terminal t) {
  switch (t) {
    case Terminal::None: return "none";
    case Terminal::Success: return "success";
    case Terminal::Collision: return "collision";
    case Terminal::BudgetExhausted: return "budget_exhausted";
  }
  return "none";
}

MarginBand margin_band(Difficulty d) {
  switch (d) {
    case Difficulty::Hard: return {0.25, 0.45};
    case Difficulty::Medium: return {0.45, 0.85};
    case Difficulty::Normal: return {0.85, 1.50};
  }
  return {0.85, 1.50};
}

Observation observe(const Scenario& s, const geom::Pose& p, const ObsConfig& cfg) {
  Observation obs;
  obs.raster_h = cfg.raster_size;
  obs.raster_w = cfg.raster_size;
  obs.raster.assign(static_cast<std::size_t>(cfg.raster_size) * cfg.raster_size, 0);

  const double half = cfg.raster_size / 2.0;
  for (int r = 0; r < cfg.raster_size; ++r) {
    for (int c = 0; c < cfg.raster_size; ++c) {
      const double lx = (c + 0.5 - half) * cfg.raster_cell;  // forward
      const double ly = (half - r - 0.5) * cfg.raster_cell;  // left
      const Vec2 w = p.from_local({lx, ly});
      bool occ = !s.bounds.contains(w);
      for (std::size_t i = 0; !occ && i < s.obstacles.size(); ++i)
        occ = s.obstacles[i].contains(w);
      if (occ) obs.raster[static_cast<std::size_t>(r) * cfg.raster_size + c] = 1;
    }
  }

  obs.rays.resize(static_cast<std::size_t>(cfg.ray_count));
  for (int i = 0; i < cfg.ray_count; ++i) {
    const double bearing = p.theta + 2.0 * geom::kPi * i / cfg.ray_count;
    obs.rays[static_cast<std::size_t>(i)] =
        geom::ray_distance(p, bearing, s.obstacles, cfg.max_range);
  }

  const Vec2 rel = p.to_local({s.slot.target.x, s.slot.target.y});
  obs.rel_x = rel.x;
  obs.rel_y = rel.y;
  obs.rel_theta = normalize_angle(s.slot.target.theta - p.theta);
  obs.slot_theta = normalize_angle(s.slot.rect.center.theta - p.theta);
  return obs;
}

Episode::Episode(Scenario scenario, EnvConfig cfg)
    : scenario_(std::move(scenario)), cfg_(cfg), pose_(scenario_.start) {
  rs_dist_ = rs_distance_to_goal(pose_);
  poses_.push_back(pose_);
}

bool Episode::success_at(const geom::Pose& p) const {
  if (geom::position_error(p, scenario_.slot.target) > cfg_.eps_pos) return false;
  if (std::abs(geom::heading_error(p, scenario_.slot.target)) > cfg_.eps_heading) return false;
  const OrientedBox fp = cfg_.vehicle.footprint().at(p);
  for (const Vec2& corner : fp.corners())
    if (!scenario_.slot.rect.contains(corner)) return false;
  return true;
}

double Episode::rs_distance_to_goal(const geom::Pose& p) const {
  return geom::reeds_shepp_distance(p, scenario_.slot.target, cfg_.turn_radius());
}

namespace {

std::vector<Pose> interpolate_poses(const Pose& from, const Pose& to, double ds) {
  const double dist = geom::position_error(from, to);
  const double dth = geom::heading_error(to, from);
  const int n = std::max(1, static_cast<int>(std::ceil(std::max(dist, std::abs(dth) * 2.0) / ds)));
  std::vector<Pose> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    out.emplace_back(from.x + t * (to.x - from.x), from.y + t * (to.y - from.y),
                     from.theta + t * dth);
  }
  return out;
}

}  // namespace

StepOutcome Episode::step(Action raw) {
  if (is_terminal()) throw std::logic_error("Episode::step called on a terminal episode");

  const Action a = cfg_.vehicle.clamp(raw);
  const Pose next = kinematic_step(pose_, a, cfg_.vehicle);
  const auto sweep = interpolate_poses(pose_, next, cfg_.sweep_ds);
  const bool collided =
      geom::swept_collision(sweep, cfg_.vehicle.footprint(), scenario_.obstacles);

  const double rs_next = rs_distance_to_goal(next);
  double reward = cfg_.reward.progress * (rs_dist_ - rs_next) + cfg_.reward.step;

  pose_ = next;
  rs_dist_ = rs_next;
  ++steps_;

  if (collided) {
    reward += cfg_.reward.collision;
    terminal_ = Terminal::Collision;
  } else if (success_at(pose_)) {
    reward += cfg_.reward.success;
    terminal_ = Terminal::Success;
  } else if (steps_ >= cfg_.budget) {
    terminal_ = Terminal::BudgetExhausted;
  }

  poses_.push_back(pose_);
  actions_.push_back(a);
  rewards_.push_back(reward);

  StepOutcome out;
  out.reward = reward;
  out.terminal = terminal_;
  out.pose = pose_;
  out.next_obs = observation();
  return out;
}

int Episode::gear_changes() const {
  int n = 0;
  double prev = 0.0;
  for (const Action& a : actions_) {
    if (std::abs(a.v) < 1e-9) continue;
    if (prev != 0.0 && a.v * prev < 0.0) ++n;
    prev = a.v;
  }
  return n;
}

std::optional<std::vector<Action>> analytic_expansion(const Episode& episode) {
  if (episode.is_terminal()) return std::nullopt;
  const EnvConfig& cfg = episode.config();
  const Scenario& scn = episode.scenario();
  const auto fp = cfg.vehicle.footprint();
  const auto gate_fp = cfg.expansion_footprint();
  const double radius = cfg.turn_radius();

  if (!geom::rs_one_switch_feasible(episode.pose(), scn.slot.target, radius, scn.obstacles,
                                    gate_fp, cfg.sweep_ds)
           .feasible)
    return std::nullopt;

  const int budget_left = cfg.budget - episode.steps();
  if (budget_left <= 0) return std::nullopt;

  // Receding-horizon execution: re-solve the maneuver from the current pose
  // every step and apply the first segment. The discrete transition follows
  // chords, so arc speed is capped to keep the per-step drift below ~2 cm
  // and each re-solve absorbs what remains.
  std::vector<Action> actions;
  Pose p = episode.pose();
  const double steer_arc = std::atan(cfg.vehicle.wheelbase / radius);
  const double arc_speed_cap = std::sqrt(0.04 * radius);  // chord error ~ v^2/(2R)
  double best_remaining = std::numeric_limits<double>::infinity();
  int stall = 0;

  auto segment_action = [&](const geom::RSPath& plan, std::size_t si) {
    const auto& seg = plan.segments[si];
    const double total = plan.total_length();
    double speed = std::min({cfg.vehicle.v_max, seg.length, std::max(0.08, 0.5 * total)});
    if (seg.motion != geom::RSMotion::Straight) speed = std::min(speed, arc_speed_cap);
    const double steer = seg.motion == geom::RSMotion::Straight
                             ? 0.0
                             : (seg.motion == geom::RSMotion::Left ? steer_arc : -steer_arc);
    return Action{seg.direction * speed, steer};
  };

  auto plan_commands = [&](const geom::RSPath& plan, std::vector<Action>& out) {
    // Negligible leading segments would burn a whole step, so prefer the
    // first segment of real extent, keeping the exact head as a fallback.
    std::size_t si = 0;
    while (si + 1 < plan.segments.size() && plan.segments[si].length < 0.03) ++si;
    out.push_back(segment_action(plan, si));
    if (si != 0) out.push_back(segment_action(plan, 0));
  };

  for (int step_i = 0; step_i < budget_left; ++step_i) {
    if (episode.success_at(p)) break;

    std::vector<Action> commands;
    const auto replan = geom::rs_one_switch_feasible(p, scn.slot.target, radius, scn.obstacles,
                                                     gate_fp, cfg.sweep_ds);
    double total = 0.0;
    if (replan.feasible && !replan.path.segments.empty()) {
      total = replan.path.total_length();
      plan_commands(replan.path, commands);
    }
    const geom::RSPath free_plan = geom::reeds_shepp_shortest(p, scn.slot.target, radius);
    if (!free_plan.segments.empty()) {
      if (commands.empty()) total = free_plan.total_length();
      plan_commands(free_plan, commands);
    }
    if (commands.empty()) break;

    if (total < best_remaining - 0.02) {
      best_remaining = total;
      stall = 0;
    } else if (++stall > 12) {
      return std::nullopt;  // not converging
    }

    bool applied = false;
    for (const Action& base : commands) {
      for (double scale : {1.0, 0.5, 0.25, 0.125}) {
        const Action act = cfg.vehicle.clamp({base.v * scale, base.steer});
        const Pose next = kinematic_step(p, act, cfg.vehicle);
        if (geom::swept_collision(interpolate_poses(p, next, cfg.sweep_ds), fp, scn.obstacles))
          continue;
        actions.push_back(act);
        p = next;
        applied = true;
        break;
      }
      if (applied) break;
    }
    if (!applied) {
      // Both plans are blocked by the accumulated drift; probe for the step
      // that best restores a gated corridor.
      double best_score = std::numeric_limits<double>::infinity();
      Action best_act{};
      Pose best_pose;
      for (double v : {arc_speed_cap, -arc_speed_cap, 0.25, -0.25, 0.15, -0.15, 0.08, -0.08}) {
        for (double steer : {0.0, 0.26, -0.26, 0.52, -0.52}) {
          const Action act = cfg.vehicle.clamp({v, steer});
          const Pose next = kinematic_step(p, act, cfg.vehicle);
          if (geom::swept_collision(interpolate_poses(p, next, cfg.sweep_ds), fp,
                                    scn.obstacles))
            continue;
          const auto probe = geom::rs_one_switch_feasible(next, scn.slot.target, radius,
                                                          scn.obstacles, gate_fp, cfg.sweep_ds);
          const double score =
              probe.feasible ? probe.remaining_length
                             : 100.0 + geom::reeds_shepp_distance(next, scn.slot.target, radius);
          if (score < best_score) {
            best_score = score;
            best_act = act;
            best_pose = next;
          }
        }
      }
      if (!std::isfinite(best_score)) return std::nullopt;  // boxed in
      actions.push_back(best_act);
      p = best_pose;
      applied = true;
    }
  }

  if (!episode.success_at(p)) return std::nullopt;
  return actions;
}

Scenario generate_scenario(std::uint64_t seed, Difficulty difficulty, SlotKind kind,
                           const ScenarioGenConfig& cfg) {
  Rng root(seed);
  Rng rng = root.substream("scenario-gen");
  const VehicleParams& veh = cfg.vehicle;
  const auto band = margin_band(difficulty);
  constexpr double kGap = 0.02;  // breathing room so tangent boxes do not touch

  Scenario s;
  s.id = to_string(kind) + "-" + to_string(difficulty) + "-s" + std::to_string(seed);
  s.difficulty = difficulty;
  s.kind = kind;
  s.bounds = OrientedBox(Pose(0, 0, 0), 10.0, 7.0);

  // Boundary walls, 0.5 m thick, occupy the outer ring of the world.
  s.obstacles.push_back(OrientedBox(Pose(0, -6.75, 0), 10.0, 0.25));
  s.obstacles.push_back(OrientedBox(Pose(0, 6.75, 0), 10.0, 0.25));
  s.obstacles.push_back(OrientedBox(Pose(-9.75, 0, 0), 0.25, 7.0));
  s.obstacles.push_back(OrientedBox(Pose(9.75, 0, 0), 0.25, 7.0));

  const double margin = rng.uniform(band.lo, band.hi);
  const double sx = rng.uniform(-3.0, 3.0);
  const double wall_inner = -6.5;

  if (kind == SlotKind::Vertical) {
    const double span = veh.width + margin;
    const double depth = veh.length + 0.5;
    const double cy = wall_inner + depth / 2.0;
    s.slot.rect = OrientedBox(Pose(sx, cy, geom::kPi / 2.0), depth / 2.0 - kGap,
                              span / 2.0 - kGap);
    const double axle_offset = veh.length / 2.0 - veh.rear_overhang;
    s.slot.target = Pose(sx, cy - axle_offset, geom::kPi / 2.0);
    if (cfg.neighbors) {
      const double nx = span / 2.0 + veh.width / 2.0;
      s.obstacles.push_back(OrientedBox(Pose(sx - nx, cy, geom::kPi / 2.0), veh.length / 2.0,
                                        veh.width / 2.0));
      s.obstacles.push_back(OrientedBox(Pose(sx + nx, cy, geom::kPi / 2.0), veh.length / 2.0,
                                        veh.width / 2.0));
    }
  } else {
    const double span = veh.length + margin;
    const double depth = veh.width + 0.5;
    const double cy = wall_inner + depth / 2.0;
    s.slot.rect = OrientedBox(Pose(sx, cy, 0.0), span / 2.0 - kGap, depth / 2.0 - kGap);
    const double axle_offset = veh.length / 2.0 - veh.rear_overhang;
    s.slot.target = Pose(sx - axle_offset, cy, 0.0);
    if (cfg.neighbors) {
      const double nx = span / 2.0 + veh.length / 2.0;
      s.obstacles.push_back(OrientedBox(Pose(sx - nx, cy, 0.0), veh.length / 2.0, veh.width / 2.0));
      s.obstacles.push_back(OrientedBox(Pose(sx + nx, cy, 0.0), veh.length / 2.0, veh.width / 2.0));
    }
  }

  const auto fp = veh.footprint();
  const double turn_radius = veh.min_turn_radius();
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const double x = rng.uniform(-7.0, 7.0);
    const double y = rng.uniform(-0.5, 5.0);
    const double base = rng.uniform() < 0.5 ? 0.0 : geom::kPi;
    const Pose start(x, y, base + rng.uniform(-0.6, 0.6));

    bool free = true;
    const OrientedBox box = fp.at(start);
    for (const auto& obs : s.obstacles) {
      if (geom::collides(box, obs)) {
        free = false;
        break;
      }
    }
    if (!free) continue;
    if (geom::reeds_shepp_distance(start, s.slot.target, turn_radius) >
        cfg.max_start_rs_distance)
      continue;
    if (cfg.reject_trivial_start &&
        geom::rs_one_switch_feasible(start, s.slot.target, turn_radius, s.obstacles, fp)
            .feasible)
      continue;
    s.start = start;
    return s;
  }
  throw GenerationError("generate_scenario: no valid start after " +
                        std::to_string(cfg.max_attempts) + " attempts for " + s.id);
}

ValidationReport validate_scenario(const Scenario& s, const VehicleParams& vehicle) {
  ValidationReport rep;
  auto fail = [&rep](const std::string& msg) {
    rep.ok = false;
    rep.problems.push_back(msg);
  };

  const auto fp = vehicle.footprint();
  const OrientedBox start_fp = fp.at(s.start);
  for (const auto& obs : s.obstacles)
    if (geom::collides(start_fp, obs)) fail("start footprint collides with an obstacle");
  if (!s.bounds.contains({s.start.x, s.start.y})) fail("start outside world bounds");

  for (const auto& obs : s.obstacles)
    if (geom::collides(s.slot.rect, obs)) fail("slot rectangle intersects an obstacle");

  const OrientedBox target_fp = fp.at(s.slot.target);
  for (const Vec2& corner : target_fp.corners())
    if (!s.slot.rect.contains(corner)) fail("target footprint not inside the slot rectangle");

  // Clearance margin along the constrained axis, measured from the emitted
  // geometry rather than generator bookkeeping.
  const double axis = s.kind == SlotKind::Vertical ? s.slot.rect.center.theta + geom::kPi / 2.0
                                                   : s.slot.rect.center.theta;
  const Pose probe(s.slot.rect.center.x, s.slot.rect.center.y, 0.0);
  const double d1 = geom::ray_distance(probe, axis, s.obstacles, 50.0);
  const double d2 = geom::ray_distance(probe, axis + geom::kPi, s.obstacles, 50.0);
  const double dim = s.kind == SlotKind::Vertical ? vehicle.width : vehicle.length;
  rep.measured_margin = d1 + d2 - dim;
  const auto band = margin_band(s.difficulty);
  if (rep.measured_margin < band.lo - 1e-6 || rep.measured_margin > band.hi + 1e-6)
    fail("clearance margin " + std::to_string(rep.measured_margin) + " outside band for " +
         to_string(s.difficulty));
  return rep;
}

}  // namespace drip::sim
