#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "vflock/error.hpp"
#include "vflock/flocking.hpp"
#include "vflock/rng.hpp"

using namespace vflock;

namespace {

std::vector<AgentState> at(std::initializer_list<Vec3> ps) {
  std::vector<AgentState> out;
  int id = 0;
  for (const auto& p : ps) out.push_back({id++, p, {}, 0.0});
  return out;
}

void check_vec(const Vec3& got, const Vec3& want, double tol = 1e-12) {
  CHECK(got.x == doctest::Approx(want.x).epsilon(tol));
  CHECK(got.y == doctest::Approx(want.y).epsilon(tol));
  CHECK(got.z == doctest::Approx(want.z).epsilon(tol));
}

// Rotation about an arbitrary unit axis (Rodrigues), independent of the yaw helpers.
Vec3 rotate(const Vec3& v, const Vec3& k, double a) {
  return v * std::cos(a) + cross(k, v) * std::sin(a) + k * (dot(k, v) * (1.0 - std::cos(a)));
}

}  // namespace

TEST_CASE("neighbor set respects the strict cutoff") {
  CHECK(neighbor_set(0, at({{0, 0, 0}, {25, 0, 0}}), 20.0).empty());
  CHECK(neighbor_set(0, at({{0, 0, 0}, {3, 0, 0}}), 20.0) == std::vector<std::size_t>{1});
  CHECK(neighbor_set(0, at({{0, 0, 0}}), 20.0).empty());
  CHECK(neighbor_set(0, at({{0, 0, 0}, {20, 0, 0}}), 20.0).empty());
}

TEST_CASE("neighbor set rejects bad indices and duplicate ids") {
  auto agents = at({{0, 0, 0}, {1, 0, 0}});
  CHECK_THROWS_AS(neighbor_set(2, agents, 20.0), Error);
  agents[1].id = 0;
  CHECK_THROWS_AS(neighbor_set(0, agents, 20.0), Error);
}

TEST_CASE("separation") {
  const std::vector<Vec3> one{{1, 0, 0}};
  check_vec(separation_cmd(one, 7.0), {-7, 0, 0});
  const std::vector<Vec3> sym{{2.5, 0, 0}, {-2.5, 0, 0}};
  check_vec(separation_cmd(sym, 7.0), {0, 0, 0});
  // -(7/2) * ((2,0,0)/4 + (0,2,0)/4)
  const std::vector<Vec3> two{{2, 0, 0}, {0, 2, 0}};
  check_vec(separation_cmd(two, 7.0), {-1.75, -1.75, 0});
  CHECK(separation_cmd({}, 7.0) == Vec3{});

  const std::vector<Vec3> degenerate{{0, 0, 0}};
  try {
    separation_cmd(degenerate, 7.0);
    FAIL("expected a degenerate-geometry error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateGeometry);
  }
}

TEST_CASE("cohesion") {
  const std::vector<Vec3> one{{2, 0, 0}};
  check_vec(cohesion_cmd(one, 1.0), {2, 0, 0});
  const std::vector<Vec3> sym{{3, 0, 0}, {-3, 0, 0}};
  check_vec(cohesion_cmd(sym, 1.0), {0, 0, 0});
  const std::vector<Vec3> two{{2, 0, 0}, {0, 2, 0}};
  check_vec(cohesion_cmd(two, 1.0), {1, 1, 0});
  CHECK(cohesion_cmd({}, 1.0) == Vec3{});
}

TEST_CASE("migration") {
  check_vec(migration_cmd({10, 0, 0}, 1.0), {1, 0, 0});
  check_vec(migration_cmd({3, 4, 0}, 1.0), {0.6, 0.8, 0});
  CHECK(migration_cmd({0, 0, 0}, 1.0) == Vec3{});
  CHECK(migration_cmd({1e-10, 0, 0}, 1.0) == Vec3{});
}

TEST_CASE("speed clamp") {
  check_vec(clamp_speed({3, 4, 0}, 2.0), {1.2, 1.6, 0});
  CHECK(clamp_speed({0.5, 0, 0}, 2.0) == Vec3{0.5, 0, 0});
  CHECK(clamp_speed({}, 2.0) == Vec3{});
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const Vec3 v{rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(-9, 9)};
    const Vec3 once = clamp_speed(v, 2.0);
    CHECK(norm(once) <= 2.0 + 1e-12);
    const Vec3 twice = clamp_speed(once, 2.0);
    CHECK(norm(twice - once) <= 1e-15);
  }
}

TEST_CASE("full command examples") {
  const FlockParams p;
  const Vec3 goal{10, 0, 0};
  const auto single = full_command(0, at({{0, 0, 0}}), &goal, p);
  CHECK(single.v_rey == Vec3{});
  check_vec(single.v_total, {1, 0, 0});

  // Separation -7, cohesion +1 along the axis: 6 m/s apart, clamped to 2.
  const auto pair = at({{0, 0, 0}, {1, 0, 0}});
  const auto c0 = full_command(0, pair, nullptr, p);
  const auto c1 = full_command(1, pair, nullptr, p);
  check_vec(c0.v_rey, {-6, 0, 0});
  check_vec(c0.v_total, {-2, 0, 0});
  check_vec(c1.v_total, {2, 0, 0});

  FlockParams zero = p;
  zero.k_sep = zero.k_coh = zero.k_mig = 0.0;
  const auto flock = at({{0, 0, 0}, {2, 1, 0}, {-1, 3, 1}});
  CHECK(full_command(0, flock, &goal, zero).v_total == Vec3{});
}

TEST_CASE("full command matches the brute-force oracle") {
  Rng rng(11);
  const FlockParams p;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(12));
    std::vector<AgentState> agents;
    std::vector<oracle::V> pos;
    for (int i = 0; i < n; ++i) {
      const Vec3 q{rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(-15, 15)};
      agents.push_back({i, q, {}, 0.0});
      pos.push_back({q.x, q.y, q.z});
    }
    const Vec3 goal{rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30)};
    const oracle::V g{goal.x, goal.y, goal.z};
    for (int i = 0; i < n; ++i) {
      const auto got = full_command(static_cast<std::size_t>(i), agents, &goal, p);
      const auto want = oracle::flocking(pos, static_cast<std::size_t>(i), &g, p.r_max, p.v_max, p.k_sep,
                                         p.k_coh, p.k_mig);
      CHECK(oracle::rel_err({got.v_total.x, got.v_total.y, got.v_total.z}, want.total) < 1e-9);
      CHECK(oracle::rel_err({got.v_rey.x, got.v_rey.y, got.v_rey.z}, want.rey) < 1e-9);
    }
  }
}

TEST_CASE("flocking law symmetries") {
  Rng rng(5);
  const FlockParams p;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<AgentState> agents;
    for (int i = 0; i < 6; ++i)
      agents.push_back({i, {rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-6, 6)}, {}, 0.0});
    const Vec3 goal{rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20)};

    SUBCASE("translation leaves the Reynolds term unchanged") {
      const Vec3 offset{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)};
      auto moved = agents;
      for (auto& a : moved) a.position += offset;
      for (std::size_t i = 0; i < agents.size(); ++i) {
        const Vec3 a = full_command(i, agents, nullptr, p).v_rey;
        const Vec3 b = full_command(i, moved, nullptr, p).v_rey;
        CHECK(norm(a - b) <= 1e-9 * std::max(1.0, norm(a)));
      }
    }
    SUBCASE("rotation equivariance") {
      Vec3 axis{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      axis = axis / norm(axis);
      const double angle = rng.uniform(-3, 3);
      auto turned = agents;
      for (auto& a : turned) a.position = rotate(a.position, axis, angle);
      const Vec3 turned_goal = rotate(goal, axis, angle);
      for (std::size_t i = 0; i < agents.size(); ++i) {
        const auto a = full_command(i, agents, &goal, p);
        const auto b = full_command(i, turned, &turned_goal, p);
        CHECK(norm(rotate(a.v_rey, axis, angle) - b.v_rey) <= 1e-9);
        CHECK(norm(rotate(a.v_total, axis, angle) - b.v_total) <= 1e-9);
        CHECK(norm(b.v_total) <= p.v_max + 1e-12);
      }
    }
  }
}

TEST_CASE("pair separation is antisymmetric") {
  Rng rng(8);
  for (int k = 0; k < 50; ++k) {
    const Vec3 a{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const Vec3 b{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const std::vector<Vec3> ab{b - a};
    const std::vector<Vec3> ba{a - b};
    CHECK(norm(separation_cmd(ab, 7.0) + separation_cmd(ba, 7.0)) <= 1e-12);
  }
}

TEST_CASE("empty neighbourhood gives an exactly zero Reynolds term") {
  const auto far = at({{0, 0, 0}, {30, 0, 0}, {0, -40, 0}});
  for (std::size_t i = 0; i < far.size(); ++i) CHECK(full_command(i, far, nullptr, FlockParams{}).v_rey == Vec3{});
}

TEST_CASE("yaw frame transforms") {
  CHECK(world_to_body(0.0, {1, 2, 3}) == Vec3{1, 2, 3});
  check_vec(world_to_body(std::numbers::pi / 2, {0, 1, 0}), {1, 0, 0}, 1e-15);
  const Vec3 b = world_to_body(std::numbers::pi / 2, {0, 1, 0});
  CHECK(std::abs(b.y) < 1e-15);

  Rng rng(9);
  for (int k = 0; k < 100; ++k) {
    const double yaw = rng.uniform(-10, 10);
    const Vec3 v{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    CHECK(norm(world_to_body(yaw, body_to_world(yaw, v)) - v) <= 1e-12);
    const auto r = BodyRotation::world_to_body(yaw);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    const auto rt = r.transpose();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int q = 0; q < 3; ++q) s += rt.m[i][q] * r.m[q][j];
        CHECK(std::abs(s - (i == j ? 1.0 : 0.0)) < 1e-9);
      }
  }
}

TEST_CASE("heading rule") {
  CHECK(heading_from_velocity({0, 1, 0}, 0.3) == doctest::Approx(std::numbers::pi / 2));
  CHECK(heading_from_velocity({0, 0, 2}, 0.3) == 0.3);
  CHECK(heading_from_velocity({5e-7, 0, 0}, -1.0) == -1.0);
  const double back = heading_from_velocity({-1, 0, 0}, 0.0);
  CHECK(back >= -std::numbers::pi);
  CHECK(back < std::numbers::pi);
  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(-std::numbers::pi));
  CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
}

TEST_CASE("parameter validation") {
  FlockParams p;
  CHECK_NOTHROW(p.validate());
  p.r_max = 0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.k_sep = -1;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.v_max = -2;
  CHECK_THROWS_AS(p.validate(), Error);
}
