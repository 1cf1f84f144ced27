#include "drip/geometry.hpp"

#include <algorithm>
#include <cassert>
#include <limits>

namespace drip::geom {

namespace {

constexpr double kZero = 10.0 * std::numeric_limits<double>::epsilon();

}  // namespace

bool collides(const OrientedBox& a, const OrientedBox& b) {
  const Vec2 d{b.center.x - a.center.x, b.center.y - a.center.y};
  const std::array<Vec2, 4> axes = {
      Vec2{std::cos(a.center.theta), std::sin(a.center.theta)},
      Vec2{-std::sin(a.center.theta), std::cos(a.center.theta)},
      Vec2{std::cos(b.center.theta), std::sin(b.center.theta)},
      Vec2{-std::sin(b.center.theta), std::cos(b.center.theta)},
  };
  for (const Vec2& n : axes) {
    const double ra = a.half_length * std::abs(dot({std::cos(a.center.theta), std::sin(a.center.theta)}, n)) +
                      a.half_width * std::abs(dot({-std::sin(a.center.theta), std::cos(a.center.theta)}, n));
    const double rb = b.half_length * std::abs(dot({std::cos(b.center.theta), std::sin(b.center.theta)}, n)) +
                      b.half_width * std::abs(dot({-std::sin(b.center.theta), std::cos(b.center.theta)}, n));
    if (std::abs(dot(d, n)) > ra + rb) return false;
  }
  return true;
}

double ray_distance(const Pose& origin, double bearing, std::span<const OrientedBox> obstacles,
                    double max_range) {
  double best = max_range;
  const Vec2 o{origin.x, origin.y};
  const Vec2 dir{std::cos(bearing), std::sin(bearing)};
  for (const auto& box : obstacles) {
    const Vec2 lo = box.center.to_local(o);
    const double c = std::cos(box.center.theta), s = std::sin(box.center.theta);
    const Vec2 ld{c * dir.x + s * dir.y, -s * dir.x + c * dir.y};

    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    bool miss = false;
    const double half[2] = {box.half_length, box.half_width};
    const double po[2] = {lo.x, lo.y};
    const double pd[2] = {ld.x, ld.y};
    for (int axis = 0; axis < 2 && !miss; ++axis) {
      if (std::abs(pd[axis]) < 1e-15) {
        if (std::abs(po[axis]) > half[axis]) miss = true;
      } else {
        double t1 = (-half[axis] - po[axis]) / pd[axis];
        double t2 = (half[axis] - po[axis]) / pd[axis];
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
      }
    }
    if (miss || tmax < std::max(tmin, 0.0)) continue;
    best = std::min(best, std::max(tmin, 0.0));
  }
  return std::min(best, max_range);
}

// --- Reeds-Shepp -------------------------------------------------------

namespace {

enum Letter : int { N = 0, L = 1, S = 2, R = 3 };

using Word = std::array<int, 5>;

// Canonical segment patterns of the word families.
constexpr std::array<Word, 18> kWords = {{
    {L, R, L, N, N},  // 0
    {R, L, R, N, N},  // 1
    {L, R, L, R, N},  // 2
    {R, L, R, L, N},  // 3
    {L, R, S, L, N},  // 4
    {R, L, S, R, N},  // 5
    {L, S, R, L, N},  // 6
    {R, S, L, R, N},  // 7
    {L, R, S, R, N},  // 8
    {R, L, S, L, N},  // 9
    {R, S, R, L, N},  // 10
    {L, S, L, R, N},  // 11
    {L, S, R, N, N},  // 12
    {R, S, L, N, N},  // 13
    {L, S, L, N, N},  // 14
    {R, S, R, N, N},  // 15
    {L, R, S, L, R},  // 16
    {R, L, S, R, L},  // 17
}};

double mod2pi(double a) { return normalize_angle(a); }

void polar(double x, double y, double& r, double& theta) {
  r = std::hypot(x, y);
  theta = std::atan2(y, x);
}

void tau_omega(double u, double v, double xi, double eta, double phi, double& tau,
               double& omega) {
  const double delta = mod2pi(u - v);
  const double A = std::sin(u) - std::sin(delta);
  const double B = std::cos(u) - std::cos(delta) - 1.0;
  const double t1 = std::atan2(eta * A - xi * B, xi * A + eta * B);
  const double t2 = 2.0 * (std::cos(delta) - std::cos(v) - std::cos(u)) + 3.0;
  tau = (t2 < 0.0) ? mod2pi(t1 + kPi) : mod2pi(t1);
  omega = mod2pi(tau - u + v - phi);
}

bool LpSpLp(double x, double y, double phi, double& t, double& u, double& v) {
  polar(x - std::sin(phi), y - 1.0 + std::cos(phi), u, t);
  if (t >= -kZero) {
    v = mod2pi(phi - t);
    if (v >= -kZero) return true;
  }
  return false;
}

bool LpSpRp(double x, double y, double phi, double& t, double& u, double& v) {
  double t1, u1;
  polar(x + std::sin(phi), y - 1.0 - std::cos(phi), u1, t1);
  u1 *= u1;
  if (u1 < 4.0) return false;
  u = std::sqrt(u1 - 4.0);
  const double theta = std::atan2(2.0, u);
  t = mod2pi(t1 + theta);
  v = mod2pi(t - phi);
  return t >= -kZero && v >= -kZero;
}

bool LpRmL(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x - std::sin(phi), eta = y - 1.0 + std::cos(phi);
  double u1, theta;
  polar(xi, eta, u1, theta);
  if (u1 > 4.0) return false;
  u = -2.0 * std::asin(0.25 * u1);
  t = mod2pi(theta + 0.5 * u + kPi);
  v = mod2pi(phi - t + u);
  return t >= -kZero && u <= kZero;
}

bool LpRupLumRm(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi), eta = y - 1.0 - std::cos(phi);
  const double rho = 0.25 * (2.0 + std::hypot(xi, eta));
  if (rho > 1.0) return false;
  u = std::acos(rho);
  tau_omega(u, -u, xi, eta, phi, t, v);
  return t >= -kZero && v <= kZero;
}

bool LpRumLumRp(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi), eta = y - 1.0 - std::cos(phi);
  const double rho = (20.0 - xi * xi - eta * eta) / 16.0;
  if (rho < 0.0 || rho > 1.0) return false;
  u = -std::acos(rho);
  if (u < -0.5 * kPi) return false;
  tau_omega(u, u, xi, eta, phi, t, v);
  return t >= -kZero && v >= -kZero;
}

bool LpRmSmLm(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x - std::sin(phi), eta = y - 1.0 + std::cos(phi);
  double rho, theta;
  polar(xi, eta, rho, theta);
  if (rho < 2.0) return false;
  const double r = std::sqrt(rho * rho - 4.0);
  u = 2.0 - r;
  t = mod2pi(theta + std::atan2(r, -2.0));
  v = mod2pi(phi - 0.5 * kPi - t);
  return t >= -kZero && u <= kZero && v <= kZero;
}

bool LpRmSmRm(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi), eta = y - 1.0 - std::cos(phi);
  double rho, theta;
  polar(-eta, xi, rho, theta);
  if (rho < 2.0) return false;
  t = theta;
  u = 2.0 - rho;
  v = mod2pi(t + 0.5 * kPi - phi);
  return t >= -kZero && u <= kZero && v <= kZero;
}

bool LpRmSLmRp(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi), eta = y - 1.0 - std::cos(phi);
  double rho, theta;
  polar(xi, eta, rho, theta);
  if (rho < 2.0) return false;
  u = 4.0 - std::sqrt(rho * rho - 4.0);
  if (u > kZero) return false;
  t = mod2pi(std::atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta));
  v = mod2pi(t - phi);
  return t >= -kZero && v >= -kZero;
}

struct Candidate {
  int word = 0;
  std::array<double, 5> params{};  // normalized (radius 1), signed
};

class Enumerator {
 public:
  Enumerator(double x, double y, double phi) : x_(x), y_(y), phi_(phi) {}

  void run(std::vector<Candidate>& out) {
    out_ = &out;
    csc();
    ccc();
    cccc();
    ccsc();
    ccscc();
  }

 private:
  void push(int word, double p0, double p1, double p2, double p3 = 0.0, double p4 = 0.0) {
    out_->push_back({word, {p0, p1, p2, p3, p4}});
  }

  void csc() {
    double t, u, v;
    if (LpSpLp(x_, y_, phi_, t, u, v)) push(14, t, u, v);
    if (LpSpLp(-x_, y_, -phi_, t, u, v)) push(14, -t, -u, -v);
    if (LpSpLp(x_, -y_, -phi_, t, u, v)) push(15, t, u, v);
    if (LpSpLp(-x_, -y_, phi_, t, u, v)) push(15, -t, -u, -v);
    if (LpSpRp(x_, y_, phi_, t, u, v)) push(12, t, u, v);
    if (LpSpRp(-x_, y_, -phi_, t, u, v)) push(12, -t, -u, -v);
    if (LpSpRp(x_, -y_, -phi_, t, u, v)) push(13, t, u, v);
    if (LpSpRp(-x_, -y_, phi_, t, u, v)) push(13, -t, -u, -v);
  }

  void ccc() {
    double t, u, v;
    if (LpRmL(x_, y_, phi_, t, u, v)) push(0, t, u, v);
    if (LpRmL(-x_, y_, -phi_, t, u, v)) push(0, -t, -u, -v);
    if (LpRmL(x_, -y_, -phi_, t, u, v)) push(1, t, u, v);
    if (LpRmL(-x_, -y_, phi_, t, u, v)) push(1, -t, -u, -v);
    // backwards
    const double xb = x_ * std::cos(phi_) + y_ * std::sin(phi_);
    const double yb = x_ * std::sin(phi_) - y_ * std::cos(phi_);
    if (LpRmL(xb, yb, phi_, t, u, v)) push(0, v, u, t);
    if (LpRmL(-xb, yb, -phi_, t, u, v)) push(0, -v, -u, -t);
    if (LpRmL(xb, -yb, -phi_, t, u, v)) push(1, v, u, t);
    if (LpRmL(-xb, -yb, phi_, t, u, v)) push(1, -v, -u, -t);
  }

  void cccc() {
    double t, u, v;
    if (LpRupLumRm(x_, y_, phi_, t, u, v)) push(2, t, u, -u, v);
    if (LpRupLumRm(-x_, y_, -phi_, t, u, v)) push(2, -t, -u, u, -v);
    if (LpRupLumRm(x_, -y_, -phi_, t, u, v)) push(3, t, u, -u, v);
    if (LpRupLumRm(-x_, -y_, phi_, t, u, v)) push(3, -t, -u, u, -v);
    if (LpRumLumRp(x_, y_, phi_, t, u, v)) push(2, t, u, u, v);
    if (LpRumLumRp(-x_, y_, -phi_, t, u, v)) push(2, -t, -u, -u, -v);
    if (LpRumLumRp(x_, -y_, -phi_, t, u, v)) push(3, t, u, u, v);
    if (LpRumLumRp(-x_, -y_, phi_, t, u, v)) push(3, -t, -u, -u, -v);
  }

  void ccsc() {
    constexpr double H = 0.5 * kPi;
    double t, u, v;
    if (LpRmSmLm(x_, y_, phi_, t, u, v)) push(4, t, -H, u, v);
    if (LpRmSmLm(-x_, y_, -phi_, t, u, v)) push(4, -t, H, -u, -v);
    if (LpRmSmLm(x_, -y_, -phi_, t, u, v)) push(5, t, -H, u, v);
    if (LpRmSmLm(-x_, -y_, phi_, t, u, v)) push(5, -t, H, -u, -v);
    if (LpRmSmRm(x_, y_, phi_, t, u, v)) push(8, t, -H, u, v);
    if (LpRmSmRm(-x_, y_, -phi_, t, u, v)) push(8, -t, H, -u, -v);
    if (LpRmSmRm(x_, -y_, -phi_, t, u, v)) push(9, t, -H, u, v);
    if (LpRmSmRm(-x_, -y_, phi_, t, u, v)) push(9, -t, H, -u, -v);
    // backwards
    const double xb = x_ * std::cos(phi_) + y_ * std::sin(phi_);
    const double yb = x_ * std::sin(phi_) - y_ * std::cos(phi_);
    if (LpRmSmLm(xb, yb, phi_, t, u, v)) push(6, v, u, -H, t);
    if (LpRmSmLm(-xb, yb, -phi_, t, u, v)) push(6, -v, -u, H, -t);
    if (LpRmSmLm(xb, -yb, -phi_, t, u, v)) push(7, v, u, -H, t);
    if (LpRmSmLm(-xb, -yb, phi_, t, u, v)) push(7, -v, -u, H, -t);
    if (LpRmSmRm(xb, yb, phi_, t, u, v)) push(10, v, u, -H, t);
    if (LpRmSmRm(-xb, yb, -phi_, t, u, v)) push(10, -v, -u, H, -t);
    if (LpRmSmRm(xb, -yb, -phi_, t, u, v)) push(11, v, u, -H, t);
    if (LpRmSmRm(-xb, -yb, phi_, t, u, v)) push(11, -v, -u, H, -t);
  }

  void ccscc() {
    constexpr double H = 0.5 * kPi;
    double t, u, v;
    if (LpRmSLmRp(x_, y_, phi_, t, u, v)) push(16, t, -H, u, -H, v);
    if (LpRmSLmRp(-x_, y_, -phi_, t, u, v)) push(16, -t, H, -u, H, -v);
    if (LpRmSLmRp(x_, -y_, -phi_, t, u, v)) push(17, t, -H, u, -H, v);
    if (LpRmSLmRp(-x_, -y_, phi_, t, u, v)) push(17, -t, H, -u, H, -v);
  }

  double x_, y_, phi_;
  std::vector<Candidate>* out_ = nullptr;
};

RSPath to_path(const Candidate& c, double radius) {
  RSPath path;
  path.turn_radius = radius;
  const Word& word = kWords[static_cast<std::size_t>(c.word)];
  for (int i = 0; i < 5; ++i) {
    if (word[i] == N) continue;
    const double p = c.params[static_cast<std::size_t>(i)];
    if (std::abs(p) < 1e-12) continue;
    RSSegment seg;
    seg.motion = word[i] == S ? RSMotion::Straight : (word[i] == L ? RSMotion::Left : RSMotion::Right);
    seg.direction = p >= 0.0 ? 1 : -1;
    seg.length = std::abs(p) * radius;
    path.segments.push_back(seg);
  }
  return path;
}

Pose advance(const Pose& p, const RSSegment& seg, double s, double radius) {
  const double d = seg.direction > 0 ? s : -s;
  if (seg.motion == RSMotion::Straight) {
    return {p.x + d * std::cos(p.theta), p.y + d * std::sin(p.theta), p.theta};
  }
  const double side = seg.motion == RSMotion::Left ? 1.0 : -1.0;
  const double angle = side * d / radius;
  const Vec2 center{p.x - side * radius * std::sin(p.theta), p.y + side * radius * std::cos(p.theta)};
  const double ca = std::cos(angle), sa = std::sin(angle);
  const Vec2 rel{p.x - center.x, p.y - center.y};
  return {center.x + ca * rel.x - sa * rel.y, center.y + sa * rel.x + ca * rel.y,
          p.theta + angle};
}

}  // namespace

Pose RSPath::endpoint(const Pose& start) const {
  Pose p = start;
  for (const auto& seg : segments) p = advance(p, seg, seg.length, turn_radius);
  return p;
}

std::vector<Pose> RSPath::sample(const Pose& start, double ds) const {
  std::vector<Pose> poses;
  poses.push_back(start);
  Pose p = start;
  for (const auto& seg : segments) {
    if (seg.length <= 0.0) continue;
    const int n = std::max(1, static_cast<int>(std::ceil(seg.length / ds)));
    for (int i = 1; i <= n; ++i) {
      poses.push_back(advance(p, seg, seg.length * i / n, turn_radius));
    }
    p = poses.back();
  }
  return poses;
}

std::vector<RSPath::SamplePoint> RSPath::sample_with_info(const Pose& start, double ds) const {
  std::vector<SamplePoint> pts;
  pts.push_back({start, 0.0, segments.empty() ? 1 : segments.front().direction});
  Pose p = start;
  double s_base = 0.0;
  for (const auto& seg : segments) {
    if (seg.length <= 0.0) continue;
    const int n = std::max(1, static_cast<int>(std::ceil(seg.length / ds)));
    for (int i = 1; i <= n; ++i) {
      const double local = seg.length * i / n;
      pts.push_back({advance(p, seg, local, turn_radius), s_base + local, seg.direction});
    }
    p = pts.back().pose;
    s_base += seg.length;
  }
  return pts;
}

std::vector<RSPath> reeds_shepp_candidates(const Pose& start, const Pose& goal,
                                           double turn_radius) {
  const double dx = goal.x - start.x, dy = goal.y - start.y;
  const double c = std::cos(start.theta), s = std::sin(start.theta);
  const double x = (c * dx + s * dy) / turn_radius;
  const double y = (-s * dx + c * dy) / turn_radius;
  const double phi = normalize_angle(goal.theta - start.theta);

  std::vector<Candidate> raw;
  raw.reserve(32);
  Enumerator(x, y, phi).run(raw);

  std::vector<RSPath> out;
  out.reserve(raw.size() + 1);
  if (std::hypot(dx, dy) < 1e-12 && std::abs(phi) < 1e-12) {
    out.push_back(RSPath{{}, turn_radius});  // identity
  }
  for (const auto& cand : raw) {
    RSPath path = to_path(cand, turn_radius);
    const Pose end = path.endpoint(start);
    if (position_error(end, goal) < 1e-6 * std::max(1.0, turn_radius) &&
        std::abs(heading_error(end, goal)) < 1e-6) {
      out.push_back(std::move(path));
    }
  }
  return out;
}

RSPath reeds_shepp_shortest(const Pose& start, const Pose& goal, double turn_radius) {
  auto candidates = reeds_shepp_candidates(start, goal, turn_radius);
  assert(!candidates.empty());
  const auto best =
      std::min_element(candidates.begin(), candidates.end(),
                       [](const RSPath& a, const RSPath& b) { return a.total_length() < b.total_length(); });
  return *best;
}

bool swept_collision(std::span<const Pose> poses, const VehicleFootprint& vehicle,
                     std::span<const OrientedBox> obstacles) {
  const double veh_radius = std::hypot(vehicle.half_length, vehicle.half_width);
  for (const auto& pose : poses) {
    const OrientedBox fp = vehicle.at(pose);
    for (const auto& obs : obstacles) {
      const double gap = std::hypot(fp.center.x - obs.center.x, fp.center.y - obs.center.y);
      if (gap > veh_radius + obs.bounding_radius()) continue;
      if (collides(fp, obs)) return true;
    }
  }
  return false;
}

OneSwitchResult rs_one_switch_feasible(const Pose& start, const Pose& goal, double turn_radius,
                                       std::span<const OrientedBox> obstacles,
                                       const VehicleFootprint& vehicle, double sweep_ds) {
  auto candidates = reeds_shepp_candidates(start, goal, turn_radius);
  std::erase_if(candidates, [](const RSPath& p) { return p.gear_changes() > 1; });
  std::sort(candidates.begin(), candidates.end(),
            [](const RSPath& a, const RSPath& b) { return a.total_length() < b.total_length(); });
  for (const auto& path : candidates) {
    // Coarse pass rejects cheaply; a clean coarse pass is confirmed at the
    // contract resolution.
    if (swept_collision(path.sample(start, 0.25), vehicle, obstacles)) continue;
    if (swept_collision(path.sample(start, sweep_ds), vehicle, obstacles)) continue;
    return {true, path.total_length(), path};
  }
  return {};
}

}  // namespace drip::geom
