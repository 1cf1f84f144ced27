#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "drip/sim.hpp"

namespace drip::sim {

using ordered_json = nlohmann::ordered_json;

// "drip-scene/1" scenario files, one scenario per file.
ordered_json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const ordered_json& j);
void save_scenario(const Scenario& s, const std::string& path);
Scenario load_scenario(const std::string& path);

// Trajectory dumps ("drip-traj/1"): ordered pose + action records.
struct TrajectoryDump {
  std::string scenario_id;
  Terminal terminal = Terminal::None;
  std::vector<geom::Pose> poses;    // size steps + 1
  std::vector<Action> actions;      // size steps
  std::vector<double> rewards;      // size steps
};
ordered_json trajectory_to_json(const TrajectoryDump& t);
TrajectoryDump trajectory_from_json(const ordered_json& j);
void save_trajectory(const TrajectoryDump& t, const std::string& path);

// Observation serialization; the raster is packed as a hex bitmap.
ordered_json observation_to_json(const Observation& o);
Observation observation_from_json(const ordered_json& j);

ordered_json pose_to_json(const geom::Pose& p);
geom::Pose pose_from_json(const ordered_json& j);
ordered_json box_to_json(const geom::OrientedBox& b);
geom::OrientedBox box_from_json(const ordered_json& j);

}  // namespace drip::sim
