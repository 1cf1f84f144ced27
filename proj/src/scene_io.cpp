#include "drip/scene_io.hpp"

#include <fstream>
#include <stdexcept>

namespace drip::sim {

namespace {

constexpr char kHex[] = "0123456789abcdef";

std::string pack_bits_hex(const std::vector<std::uint8_t>& bits) {
  std::string out;
  out.reserve((bits.size() + 3) / 4);
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    int nibble = 0;
    for (std::size_t j = 0; j < 4 && i + j < bits.size(); ++j)
      if (bits[i + j]) nibble |= 1 << (3 - static_cast<int>(j));
    out.push_back(kHex[nibble]);
  }
  return out;
}

std::vector<std::uint8_t> unpack_bits_hex(const std::string& hex, std::size_t n) {
  std::vector<std::uint8_t> bits(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const char c = hex[i / 4];
    const int nibble = c <= '9' ? c - '0' : c - 'a' + 10;
    bits[i] = (nibble >> (3 - static_cast<int>(i % 4))) & 1 ? 1 : 0;
  }
  return bits;
}

}  // namespace

ordered_json pose_to_json(const geom::Pose& p) {
  return ordered_json{{"x", p.x}, {"y", p.y}, {"theta", p.theta}};
}

geom::Pose pose_from_json(const ordered_json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("theta").get<double>()};
}

ordered_json box_to_json(const geom::OrientedBox& b) {
  return ordered_json{{"x", b.center.x},
                      {"y", b.center.y},
                      {"theta", b.center.theta},
                      {"half_length", b.half_length},
                      {"half_width", b.half_width}};
}

geom::OrientedBox box_from_json(const ordered_json& j) {
  return {geom::Pose(j.at("x").get<double>(), j.at("y").get<double>(),
                     j.at("theta").get<double>()),
          j.at("half_length").get<double>(), j.at("half_width").get<double>()};
}

ordered_json scenario_to_json(const Scenario& s) {
  ordered_json j;
  j["version"] = "drip-scene/1";
  j["id"] = s.id;
  j["difficulty"] = to_string(s.difficulty);
  j["kind"] = to_string(s.kind);
  j["bounds"] = box_to_json(s.bounds);
  j["slot"] = ordered_json{{"target", pose_to_json(s.slot.target)},
                           {"rect", box_to_json(s.slot.rect)}};
  ordered_json obstacles = ordered_json::array();
  for (const auto& o : s.obstacles) obstacles.push_back(box_to_json(o));
  j["obstacles"] = obstacles;
  j["start"] = pose_to_json(s.start);
  return j;
}

Scenario scenario_from_json(const ordered_json& j) {
  if (j.at("version").get<std::string>() != "drip-scene/1")
    throw std::runtime_error("unsupported scenario version");
  Scenario s;
  s.id = j.at("id").get<std::string>();
  s.difficulty = difficulty_from_string(j.at("difficulty").get<std::string>());
  s.kind = slot_kind_from_string(j.at("kind").get<std::string>());
  s.bounds = box_from_json(j.at("bounds"));
  s.slot.target = pose_from_json(j.at("slot").at("target"));
  s.slot.rect = box_from_json(j.at("slot").at("rect"));
  for (const auto& o : j.at("obstacles")) s.obstacles.push_back(box_from_json(o));
  s.start = pose_from_json(j.at("start"));
  return s;
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario: " + path);
  out << scenario_to_json(s).dump(2) << "\n";
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scenario: " + path);
  return scenario_from_json(ordered_json::parse(in));
}

ordered_json trajectory_to_json(const TrajectoryDump& t) {
  ordered_json j;
  j["version"] = "drip-traj/1";
  j["scenario_id"] = t.scenario_id;
  j["terminal"] = to_string(t.terminal);
  ordered_json poses = ordered_json::array();
  for (const auto& p : t.poses) poses.push_back(pose_to_json(p));
  j["poses"] = poses;
  ordered_json actions = ordered_json::array();
  for (const auto& a : t.actions) actions.push_back(ordered_json::array({a.v, a.steer}));
  j["actions"] = actions;
  j["rewards"] = t.rewards;
  return j;
}

TrajectoryDump trajectory_from_json(const ordered_json& j) {
  if (j.at("version").get<std::string>() != "drip-traj/1")
    throw std::runtime_error("unsupported trajectory version");
  TrajectoryDump t;
  t.scenario_id = j.at("scenario_id").get<std::string>();
  const std::string term = j.at("terminal").get<std::string>();
  t.terminal = term == "success"          ? Terminal::Success
               : term == "collision"      ? Terminal::Collision
               : term == "budget_exhausted" ? Terminal::BudgetExhausted
                                            : Terminal::None;
  for (const auto& p : j.at("poses")) t.poses.push_back(pose_from_json(p));
  for (const auto& a : j.at("actions")) t.actions.push_back({a[0].get<double>(), a[1].get<double>()});
  t.rewards = j.at("rewards").get<std::vector<double>>();
  return t;
}

void save_trajectory(const TrajectoryDump& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory: " + path);
  out << trajectory_to_json(t).dump() << "\n";
}

ordered_json observation_to_json(const Observation& o) {
  ordered_json j;
  j["raster_h"] = o.raster_h;
  j["raster_w"] = o.raster_w;
  j["raster_hex"] = pack_bits_hex(o.raster);
  j["rays"] = o.rays;
  j["target_rel"] = ordered_json::array({o.rel_x, o.rel_y, o.rel_theta, o.slot_theta});
  return j;
}

Observation observation_from_json(const ordered_json& j) {
  Observation o;
  o.raster_h = j.at("raster_h").get<int>();
  o.raster_w = j.at("raster_w").get<int>();
  o.raster = unpack_bits_hex(j.at("raster_hex").get<std::string>(),
                             static_cast<std::size_t>(o.raster_h) * o.raster_w);
  o.rays = j.at("rays").get<std::vector<double>>();
  const auto& rel = j.at("target_rel");
  o.rel_x = rel[0].get<double>();
  o.rel_y = rel[1].get<double>();
  o.rel_theta = rel[2].get<double>();
  o.slot_theta = rel[3].get<double>();
  return o;
}

}  // namespace drip::sim
