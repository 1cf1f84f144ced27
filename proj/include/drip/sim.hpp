#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "drip/geometry.hpp"
#include "drip/rng.hpp"

namespace drip::sim {

// Per-step action: path increment (meters per step) and steering angle.
struct Action {
  double v = 0.0;
  double steer = 0.0;
};

struct VehicleParams {
  double wheelbase = 2.8;
  double length = 4.6;
  double width = 1.8;
  double rear_overhang = 0.9;
  double v_min = -1.0;
  double v_max = 1.0;
  double steer_max = 0.52;  // bounds are symmetric: steer in [-steer_max, steer_max]
  double dt = 1.0;

  geom::VehicleFootprint footprint() const {
    return {length / 2.0, width / 2.0, length / 2.0 - rear_overhang};
  }

  Action clamp(Action a) const {
    a.v = std::clamp(a.v, v_min, v_max);
    a.steer = std::clamp(a.steer, -steer_max, steer_max);
    return a;
  }

  // Minimum turning radius of the rear axle at full steering.
  double min_turn_radius() const { return wheelbase / std::tan(steer_max); }
};

geom::Pose kinematic_step(const geom::Pose& p, Action a, const VehicleParams& params);

enum class Difficulty { Normal, Medium, Hard };
enum class SlotKind { Parallel, Vertical };

std::string to_string(Difficulty d);
std::string to_string(SlotKind k);
Difficulty difficulty_from_string(const std::string& s);
SlotKind slot_kind_from_string(const std::string& s);

// Clearance-margin band per tier: slot dimension minus vehicle dimension
// along the constrained axis.
struct MarginBand {
  double lo = 0.0;
  double hi = 0.0;
};
MarginBand margin_band(Difficulty d);

struct Slot {
  geom::Pose target;       // rear-axle pose when parked
  geom::OrientedBox rect;  // slot rectangle
};

struct Scenario {
  std::string id;
  Difficulty difficulty = Difficulty::Normal;
  SlotKind kind = SlotKind::Vertical;
  Slot slot;
  std::vector<geom::OrientedBox> obstacles;
  geom::Pose start;
  geom::OrientedBox bounds;  // world rectangle
};

struct ObsConfig {
  int raster_size = 64;
  double raster_cell = 0.25;
  int ray_count = 36;
  double max_range = 8.0;
};

struct Observation {
  int raster_h = 0;
  int raster_w = 0;
  std::vector<std::uint8_t> raster;  // row-major; 1 = occupied
  std::vector<double> rays;
  double rel_x = 0.0;  // target position in the ego frame
  double rel_y = 0.0;
  double rel_theta = 0.0;   // target heading in the ego frame, (-pi, pi]
  double slot_theta = 0.0;  // slot rectangle orientation in the ego frame
};

Observation observe(const Scenario& s, const geom::Pose& p, const ObsConfig& cfg);

enum class Terminal { None, Success, Collision, BudgetExhausted };
std::string to_string(Terminal t);

struct StepOutcome {
  Observation next_obs;
  double reward = 0.0;
  Terminal terminal = Terminal::None;
  geom::Pose pose;
};

struct RewardConfig {
  double progress = 1.0;        // weight on the decrease of RS distance to goal
  double step = -0.05;          // per-step cost
  double collision = -5.0;      // terminal penalty
  double success = 10.0;        // terminal bonus
};

struct EnvConfig {
  VehicleParams vehicle;
  ObsConfig obs;
  RewardConfig reward;
  int budget = 50;
  double eps_pos = 0.15;
  double eps_heading = 0.1;
  double sweep_ds = 0.05;
  double rs_turn_radius = 0.0;  // 0 = derive from steering limits
  // Footprint inflation used when gating the analytic expansion: the tracker
  // follows the nominal curve with bounded chord drift, so the shortcut only
  // fires where the corridor has at least this much clearance.
  double expansion_clearance = 0.04;

  double turn_radius() const {
    return rs_turn_radius > 0.0 ? rs_turn_radius : vehicle.min_turn_radius();
  }

  geom::VehicleFootprint expansion_footprint() const {
    auto fp = vehicle.footprint();
    fp.half_length += expansion_clearance;
    fp.half_width += expansion_clearance;
    return fp;
  }
};

// One episode; drive from a single thread.
class Episode {
 public:
  Episode(Scenario scenario, EnvConfig cfg);

  const geom::Pose& pose() const { return pose_; }
  int steps() const { return steps_; }
  Terminal terminal() const { return terminal_; }
  bool is_terminal() const { return terminal_ != Terminal::None; }
  const Scenario& scenario() const { return scenario_; }
  const EnvConfig& config() const { return cfg_; }

  Observation observation() const { return observe(scenario_, pose_, cfg_.obs); }

  // Applies clamping, the kinematic step, swept collision, success and
  // budget checks. Throws std::logic_error on a terminal episode.
  StepOutcome step(Action raw);

  bool success_at(const geom::Pose& p) const;
  double rs_distance_to_goal(const geom::Pose& p) const;

  const std::vector<geom::Pose>& poses() const { return poses_; }
  const std::vector<Action>& actions() const { return actions_; }
  const std::vector<double>& rewards() const { return rewards_; }
  int gear_changes() const;

 private:
  Scenario scenario_;
  EnvConfig cfg_;
  geom::Pose pose_;
  int steps_ = 0;
  Terminal terminal_ = Terminal::None;
  double rs_dist_ = 0.0;
  std::vector<geom::Pose> poses_;
  std::vector<Action> actions_;
  std::vector<double> rewards_;
};

// Reeds-Shepp shortcut: when a one-gear-change path from the current pose to
// the target sweeps collision-free, returns a bounded action sequence whose
// execution ends the episode in success within the remaining budget.
std::optional<std::vector<Action>> analytic_expansion(const Episode& episode);

struct ScenarioGenConfig {
  VehicleParams vehicle;
  bool neighbors = true;             // parked cars flanking the slot
  bool reject_trivial_start = true;  // resample starts already connectable in one maneuver
  double max_start_rs_distance = 20.0;
  int max_attempts = 1000;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deterministic in (seed, difficulty, kind, cfg).
Scenario generate_scenario(std::uint64_t seed, Difficulty difficulty, SlotKind kind,
                           const ScenarioGenConfig& cfg);

struct ValidationReport {
  bool ok = true;
  double measured_margin = 0.0;
  std::vector<std::string> problems;
};

ValidationReport validate_scenario(const Scenario& s, const VehicleParams& vehicle);

}  // namespace drip::sim
