#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "drip/geometry.hpp"
#include "drip/rng.hpp"
#include "oracles.hpp"

using namespace drip;
using namespace drip::geom;

namespace {

OrientedBox unit_square(double x, double y, double theta = 0.0) {
  return {Pose(x, y, theta), 0.5, 0.5};
}

OrientedBox random_box(Rng& rng) {
  return {Pose(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-kPi, kPi)),
          rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0)};
}

Pose random_pose(Rng& rng, double range = 8.0) {
  return {rng.uniform(-range, range), rng.uniform(-range, range), rng.uniform(-kPi, kPi)};
}

}  // namespace

TEST_CASE("angle normalization lands in (-pi, pi]") {
  CHECK(normalize_angle(kPi) == doctest::Approx(kPi));
  CHECK(normalize_angle(-kPi) == doctest::Approx(kPi));
  CHECK(normalize_angle(3 * kPi) == doctest::Approx(kPi));
  CHECK(normalize_angle(0.1 + 4 * kPi) == doctest::Approx(0.1));
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-50, 50);
    const double n = normalize_angle(a);
    CHECK(n > -kPi);
    CHECK(n <= kPi);
    CHECK(std::abs(normalize_angle(a - n)) < 1e-9);
  }
}

TEST_CASE("oriented box corners form a proper rectangle") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const OrientedBox b = random_box(rng);
    const auto c = b.corners();
    const double d1 = norm(c[0] - c[2]);
    const double d2 = norm(c[1] - c[3]);
    CHECK(std::abs(d1 - d2) < 1e-9);
    CHECK(norm(c[0] - c[1]) == doctest::Approx(2 * b.half_length).epsilon(1e-12));
    CHECK(norm(c[1] - c[2]) == doctest::Approx(2 * b.half_width).epsilon(1e-12));
  }
}

TEST_CASE("collides: separated unit squares") {
  CHECK_FALSE(collides(unit_square(0, 0), unit_square(3, 0)));
}

TEST_CASE("collides: identical boxes overlap") {
  const auto b = unit_square(0, 0);
  CHECK(collides(b, b));
}

TEST_CASE("collides: rotated near-touching case agrees with sampling oracle") {
  const auto a = unit_square(0, 0);
  const auto b = unit_square(1.2, 0, kPi / 4);
  CHECK(collides(a, b) == oracle::boxes_overlap_sampled(a, b));
}

TEST_CASE("collides is symmetric and matches the sampling oracle on random pairs") {
  Rng rng(2024);
  int hits = 0;
  for (int i = 0; i < 1000; ++i) {
    const OrientedBox a = random_box(rng);
    const OrientedBox b = random_box(rng);
    const bool sat = collides(a, b);
    CHECK(sat == collides(b, a));
    CHECK(sat == oracle::boxes_overlap_sampled(a, b));
    hits += sat ? 1 : 0;
  }
  // Make sure the random mix exercises both outcomes.
  CHECK(hits > 100);
  CHECK(hits < 900);
}

TEST_CASE("ray_distance: axis-aligned face hit") {
  const OrientedBox box(Pose(7, 0, 0), 2.0, 1.0);  // nearest face at x = 5
  const std::vector<OrientedBox> obs{box};
  CHECK(ray_distance(Pose(0, 0, 0), 0.0, obs, 20.0) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("ray_distance: empty scene returns max_range") {
  CHECK(ray_distance(Pose(1, 2, 0.5), 1.0, {}, 12.5) == doctest::Approx(12.5));
}

TEST_CASE("ray_distance: rotated box oblique ray matches marching oracle") {
  const std::vector<OrientedBox> obs{OrientedBox(Pose(4, 2, 0.7), 1.5, 0.8)};
  const Pose origin(0, 0, 0);
  const double bearing = 0.45;
  const double fast = ray_distance(origin, bearing, obs, 15.0);
  const double marched = oracle::ray_distance_marched(origin, bearing, obs, 15.0);
  CHECK(std::abs(fast - marched) < 2e-4);
}

TEST_CASE("ray_distance stays within [0, max_range] and origin-inside yields 0") {
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    std::vector<OrientedBox> obs;
    for (int j = 0; j < 4; ++j) obs.push_back(random_box(rng));
    const Pose origin = random_pose(rng, 5.0);
    const double d = ray_distance(origin, rng.uniform(-kPi, kPi), obs, 9.0);
    CHECK(d >= 0.0);
    CHECK(d <= 9.0);
    bool inside = false;
    for (const auto& b : obs) inside = inside || b.contains({origin.x, origin.y});
    if (inside) CHECK(d == 0.0);
  }
}

TEST_CASE("reeds_shepp: identity and straight-line cases") {
  const Pose p(3, -2, 0.8);
  const RSPath id = reeds_shepp_shortest(p, p, 2.0);
  CHECK(id.total_length() == doctest::Approx(0.0));

  const Pose goal(p.x + 10 * std::cos(p.theta), p.y + 10 * std::sin(p.theta), p.theta);
  const RSPath line = reeds_shepp_shortest(p, goal, 2.0);
  CHECK(line.total_length() == doctest::Approx(10.0).epsilon(1e-9));
  REQUIRE(line.segments.size() == 1);
  CHECK(line.segments[0].motion == RSMotion::Straight);
  CHECK(line.segments[0].direction == 1);
}

TEST_CASE("reeds_shepp: frozen case cross-checked against numeric word search") {
  const Pose start(0, 0, 0);
  const Pose goal(1, 1, kPi / 2);
  const RSPath path = reeds_shepp_shortest(start, goal, 1.0);
  Rng rng(31);
  const double numeric = oracle::rs_shortest_length_numeric(start, goal, rng);
  CHECK(std::abs(path.total_length() - numeric) < 1e-9);
}

TEST_CASE("reeds_shepp: random cases agree with numeric oracle") {
  Rng rng(99);
  for (int i = 0; i < 5; ++i) {
    const Pose start = random_pose(rng, 2.0);
    const Pose goal = random_pose(rng, 2.0);
    const RSPath path = reeds_shepp_shortest(start, goal, 1.0);
    Rng orng = rng.substream("oracle", static_cast<std::uint64_t>(i));
    const double numeric = oracle::rs_shortest_length_numeric(start, goal, orng, 24);
    CHECK(path.total_length() == doctest::Approx(numeric).epsilon(1e-9));
  }
}

TEST_CASE("reeds_shepp: path reconstruction reaches the goal") {
  Rng rng(123);
  for (int i = 0; i < 100; ++i) {
    const Pose start = random_pose(rng);
    const Pose goal = random_pose(rng);
    const double radius = rng.uniform(1.0, 8.0);
    const RSPath path = reeds_shepp_shortest(start, goal, radius);
    const Pose end = path.endpoint(start);
    CHECK(position_error(end, goal) < 1e-6);
    CHECK(std::abs(heading_error(end, goal)) < 1e-6);
    for (const auto& seg : path.segments) CHECK(seg.length >= 0.0);
  }
}

TEST_CASE("reeds_shepp: length is non-decreasing in turn radius") {
  Rng rng(321);
  for (int i = 0; i < 100; ++i) {
    const Pose start = random_pose(rng);
    const Pose goal = random_pose(rng);
    double r1 = rng.uniform(0.8, 6.0);
    double r2 = rng.uniform(0.8, 6.0);
    if (r1 > r2) std::swap(r1, r2);
    const double l1 = reeds_shepp_distance(start, goal, r1);
    const double l2 = reeds_shepp_distance(start, goal, r2);
    CHECK(l1 <= l2 + 1e-9);
  }
}

TEST_CASE("reeds_shepp: sampled poses stay on the path and end at the goal") {
  Rng rng(55);
  for (int i = 0; i < 20; ++i) {
    const Pose start = random_pose(rng);
    const Pose goal = random_pose(rng);
    const RSPath path = reeds_shepp_shortest(start, goal, 3.0);
    const auto poses = path.sample(start, 0.05);
    REQUIRE(!poses.empty());
    CHECK(position_error(poses.back(), goal) < 1e-6);
    for (std::size_t j = 1; j < poses.size(); ++j) {
      CHECK(position_error(poses[j], poses[j - 1]) < 0.06);
    }
  }
}

TEST_CASE("rs_one_switch_feasible: free space straight ahead") {
  const VehicleFootprint veh{2.3, 0.9, 1.4};
  const Pose start(0, 0, 0);
  const Pose goal(6, 0, 0);
  const auto res = rs_one_switch_feasible(start, goal, 4.9, {}, veh);
  CHECK(res.feasible);
  CHECK(res.remaining_length == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(res.path.gear_changes() <= 1);
}

TEST_CASE("rs_one_switch_feasible: goal enclosed by a tight ring is unreachable") {
  const VehicleFootprint veh{2.3, 0.9, 1.4};
  const Pose goal(0, 0, 0);
  std::vector<OrientedBox> ring;
  // Four walls boxing in a region much smaller than the vehicle.
  ring.push_back({Pose(1.2, 0, 0), 0.2, 2.0});
  ring.push_back({Pose(-1.2, 0, 0), 0.2, 2.0});
  ring.push_back({Pose(0, 1.2, 0), 2.0, 0.2});
  ring.push_back({Pose(0, -1.2, 0), 2.0, 0.2});
  const auto res = rs_one_switch_feasible(Pose(8, 8, 0), goal, 4.9, ring, veh);
  CHECK_FALSE(res.feasible);
}

TEST_CASE("rs_one_switch_feasible: returned path respects the switch limit and avoids obstacles") {
  Rng rng(77);
  const VehicleFootprint veh{2.3, 0.9, 1.4};
  for (int i = 0; i < 30; ++i) {
    std::vector<OrientedBox> obs;
    for (int j = 0; j < 3; ++j)
      obs.push_back({Pose(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-kPi, kPi)),
                     rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)});
    const Pose start = random_pose(rng, 10.0);
    const Pose goal = random_pose(rng, 10.0);
    const auto res = rs_one_switch_feasible(start, goal, 4.9, obs, veh);
    if (!res.feasible) continue;
    CHECK(res.path.gear_changes() <= 1);
    CHECK_FALSE(swept_collision(res.path.sample(start, 0.01), veh, obs));
  }
}
