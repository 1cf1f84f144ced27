#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drip::geom {

inline constexpr double kPi = 3.14159265358979323846;

// Normalizes an angle into (-pi, pi].
inline double normalize_angle(double a) {
  const double r = std::atan2(std::sin(a), std::cos(a));
  return r <= -kPi ? kPi : r;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }

// Rear-axle pose: position plus heading in (-pi, pi].
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose() = default;
  Pose(double px, double py, double pth) : x(px), y(py), theta(normalize_angle(pth)) {}

  Vec2 position() const { return {x, y}; }

  // Maps a point given in this pose's frame into the world frame.
  Vec2 from_local(Vec2 p) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {x + c * p.x - s * p.y, y + s * p.x + c * p.y};
  }

  // Maps a world point into this pose's frame.
  Vec2 to_local(Vec2 p) const {
    const double c = std::cos(theta), s = std::sin(theta);
    const double dx = p.x - x, dy = p.y - y;
    return {c * dx + s * dy, -s * dx + c * dy};
  }
};

inline double heading_error(const Pose& a, const Pose& b) {
  return normalize_angle(a.theta - b.theta);
}
inline double position_error(const Pose& a, const Pose& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Rectangle with arbitrary orientation. half_length runs along the center
// pose's heading, half_width across it.
struct OrientedBox {
  Pose center;
  double half_length = 0.0;
  double half_width = 0.0;

  OrientedBox() = default;
  OrientedBox(Pose c, double hl, double hw) : center(c), half_length(hl), half_width(hw) {}

  std::array<Vec2, 4> corners() const {
    return {center.from_local({half_length, half_width}),
            center.from_local({-half_length, half_width}),
            center.from_local({-half_length, -half_width}),
            center.from_local({half_length, -half_width})};
  }

  bool contains(Vec2 p) const {
    const Vec2 l = center.to_local(p);
    return std::abs(l.x) <= half_length && std::abs(l.y) <= half_width;
  }

  double bounding_radius() const { return std::hypot(half_length, half_width); }
};

// Separating-axis test over the four face normals. Touching boundaries count
// as a collision.
bool collides(const OrientedBox& a, const OrientedBox& b);

// Distance from the origin pose's position along `bearing` (world frame) to
// the nearest obstacle boundary, capped at max_range. A ray starting inside
// an obstacle reports 0.
double ray_distance(const Pose& origin, double bearing, std::span<const OrientedBox> obstacles,
                    double max_range);

// --- Reeds-Shepp curves ------------------------------------------------

enum class RSMotion { Straight, Left, Right };

struct RSSegment {
  RSMotion motion = RSMotion::Straight;
  int direction = 1;     // +1 forward, -1 reverse
  double length = 0.0;   // arc length in meters, >= 0
};

struct RSPath {
  std::vector<RSSegment> segments;
  double turn_radius = 1.0;

  double total_length() const {
    double s = 0.0;
    for (const auto& seg : segments) s += seg.length;
    return s;
  }

  int gear_changes() const {
    int n = 0;
    for (std::size_t i = 1; i < segments.size(); ++i)
      if (segments[i].direction != segments[i - 1].direction) ++n;
    return n;
  }

  Pose endpoint(const Pose& start) const;

  // Poses along the path every `ds` meters of arc length, start and end
  // included.
  std::vector<Pose> sample(const Pose& start, double ds) const;

  struct SamplePoint {
    Pose pose;
    double s = 0.0;     // cumulative arc length
    int direction = 1;  // gear of the segment the point lies on
  };
  std::vector<SamplePoint> sample_with_info(const Pose& start, double ds) const;
};

// All candidate paths from the standard word families (up to 5 segments),
// unsorted. Every returned path reaches the goal exactly.
std::vector<RSPath> reeds_shepp_candidates(const Pose& start, const Pose& goal,
                                           double turn_radius);

// Shortest path among the candidates.
RSPath reeds_shepp_shortest(const Pose& start, const Pose& goal, double turn_radius);

inline double reeds_shepp_distance(const Pose& start, const Pose& goal, double turn_radius) {
  return reeds_shepp_shortest(start, goal, turn_radius).total_length();
}

struct VehicleFootprint {
  double half_length = 0.0;
  double half_width = 0.0;
  double center_offset = 0.0;  // distance from rear axle to geometric center, along heading

  OrientedBox at(const Pose& rear_axle) const {
    Vec2 c = rear_axle.from_local({center_offset, 0.0});
    return {Pose(c.x, c.y, rear_axle.theta), half_length, half_width};
  }
};

struct OneSwitchResult {
  bool feasible = false;
  double remaining_length = 0.0;
  RSPath path;  // valid only when feasible
};

// True when some candidate path with at most one direction change sweeps the
// vehicle footprint collision-free (sampled at <= sweep_ds of arc length).
OneSwitchResult rs_one_switch_feasible(const Pose& start, const Pose& goal, double turn_radius,
                                       std::span<const OrientedBox> obstacles,
                                       const VehicleFootprint& vehicle, double sweep_ds = 0.05);

// Swept-footprint collision test for an arbitrary pose sequence.
bool swept_collision(std::span<const Pose> poses, const VehicleFootprint& vehicle,
                     std::span<const OrientedBox> obstacles);

}  // namespace drip::geom
