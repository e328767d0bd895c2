#include "vflock/flocking.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

#include "vflock/error.hpp"

namespace vflock {

namespace {

constexpr double kGoalEpsilon = 1e-9;
constexpr double kHeadingEpsilon = 1e-6;

}  // namespace

void FlockParams::validate() const {
  if (n_agents < 1) throw Error(ErrorKind::InvalidArgument, "n_agents must be positive");
  if (!(r_max > 0.0)) throw Error(ErrorKind::InvalidArgument, "r_max must be positive");
  if (!(v_max > 0.0)) throw Error(ErrorKind::InvalidArgument, "v_max must be positive");
  if (k_sep < 0.0 || k_coh < 0.0 || k_mig < 0.0)
    throw Error(ErrorKind::InvalidArgument, "flocking gains must be non-negative");
}

BodyRotation BodyRotation::world_to_body(double yaw) { return body_to_world(yaw).transpose(); }

BodyRotation BodyRotation::body_to_world(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  BodyRotation r;
  r.m = {{{c, -s, 0.0}, {s, c, 0.0}, {0.0, 0.0, 1.0}}};
  return r;
}

Vec3 BodyRotation::apply(const Vec3& v) const {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
          m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

BodyRotation BodyRotation::transpose() const {
  BodyRotation t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.m[i][j] = m[j][i];
  return t;
}

double BodyRotation::determinant() const {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

std::vector<std::size_t> neighbor_set(std::size_t self_idx, std::span<const AgentState> agents,
                                      double r_max) {
  if (self_idx >= agents.size())
    throw Error(ErrorKind::InvalidArgument,
                "agent index " + std::to_string(self_idx) + " out of range");
  if (!(r_max > 0.0)) throw Error(ErrorKind::InvalidArgument, "r_max must be positive");

  std::unordered_set<int> ids;
  for (const auto& a : agents) {
    if (!ids.insert(a.id).second)
      throw Error(ErrorKind::InvalidArgument, "duplicate agent id " + std::to_string(a.id));
  }

  std::vector<std::size_t> out;
  const Vec3& self = agents[self_idx].position;
  for (std::size_t j = 0; j < agents.size(); ++j) {
    if (j == self_idx) continue;
    if (norm(agents[j].position - self) < r_max) out.push_back(j);
  }
  return out;
}

Vec3 separation_cmd(std::span<const Vec3> rel_positions, double k_sep) {
  if (rel_positions.empty()) return {};
  Vec3 sum;
  for (const auto& r : rel_positions) {
    const double d2 = squared_norm(r);
    if (d2 == 0.0)
      throw Error(ErrorKind::DegenerateGeometry, "coincident agents: zero relative position");
    sum += r / d2;
  }
  return sum * (-k_sep / static_cast<double>(rel_positions.size()));
}

Vec3 cohesion_cmd(std::span<const Vec3> rel_positions, double k_coh) {
  if (rel_positions.empty()) return {};
  Vec3 sum;
  for (const auto& r : rel_positions) sum += r;
  return sum * (k_coh / static_cast<double>(rel_positions.size()));
}

Vec3 migration_cmd(const Vec3& rel_goal, double k_mig) {
  const double d = norm(rel_goal);
  if (d < kGoalEpsilon) return {};
  return rel_goal * (k_mig / d);
}

Vec3 clamp_speed(const Vec3& v, double v_max) {
  const double speed = norm(v);
  if (speed <= v_max) return v;
  return v * (v_max / speed);
}

FlockCommand full_command(std::size_t self_idx, std::span<const AgentState> agents,
                          const Vec3* goal, const FlockParams& params) {
  const auto neighbors = neighbor_set(self_idx, agents, params.r_max);
  const Vec3& self = agents[self_idx].position;

  std::vector<Vec3> rel;
  rel.reserve(neighbors.size());
  for (auto j : neighbors) rel.push_back(agents[j].position - self);

  FlockCommand cmd;
  cmd.v_rey = separation_cmd(rel, params.k_sep) + cohesion_cmd(rel, params.k_coh);
  Vec3 total = cmd.v_rey;
  if (goal != nullptr) total += migration_cmd(*goal - self, params.k_mig);
  cmd.v_total = clamp_speed(total, params.v_max);
  return cmd;
}

Vec3 world_to_body(double yaw, const Vec3& v) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * v.x + s * v.y, -s * v.x + c * v.y, v.z};
}

Vec3 body_to_world(double yaw, const Vec3& v) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  // fmod rounding can land exactly on +pi.
  if (w >= std::numbers::pi) w -= two_pi;
  return w;
}

double heading_from_velocity(const Vec3& velocity, double previous_yaw) {
  if (std::hypot(velocity.x, velocity.y) < kHeadingEpsilon) return previous_yaw;
  return wrap_angle(std::atan2(velocity.y, velocity.x));
}

}  // namespace vflock
