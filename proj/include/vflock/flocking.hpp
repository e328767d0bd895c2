#pragma once

// Flocking control law: neighbor selection, separation, cohesion, migration
// and speed cutoff, plus the yaw-only world/body frame transforms.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "vflock/vec3.hpp"

namespace vflock {

struct FlockParams {
  int n_agents = 9;
  double r_max = 20.0;  // m
  double v_max = 2.0;   // m/s
  double k_sep = 7.0;   // m/s
  double k_coh = 1.0;   // m/s
  double k_mig = 1.0;   // m/s

  /// Throws Error{InvalidArgument} on r_max <= 0, v_max <= 0 or a negative gain.
  void validate() const;
};

struct AgentState {
  int id = 0;
  Vec3 position;
  Vec3 velocity;
  double yaw = 0.0;  // radians, [-pi, pi)
};

/// Rotation about the world z axis taking world vectors into the body frame.
struct BodyRotation {
  std::array<std::array<double, 3>, 3> m{};

  static BodyRotation world_to_body(double yaw);
  static BodyRotation body_to_world(double yaw);
  Vec3 apply(const Vec3& v) const;
  BodyRotation transpose() const;
  double determinant() const;
};

/// Indices j != self_idx with ||p_j - p_i|| < r_max, in ascending order.
std::vector<std::size_t> neighbor_set(std::size_t self_idx, std::span<const AgentState> agents,
                                      double r_max);

/// -(k_sep/|N|) * sum r/|r|^2; zero for an empty list.
Vec3 separation_cmd(std::span<const Vec3> rel_positions, double k_sep);

/// (k_coh/|N|) * sum r; zero for an empty list.
Vec3 cohesion_cmd(std::span<const Vec3> rel_positions, double k_coh);

/// Unit direction to the goal times k_mig; zero within 1e-9 m of the goal.
Vec3 migration_cmd(const Vec3& rel_goal, double k_mig);

Vec3 clamp_speed(const Vec3& v, double v_max);

struct FlockCommand {
  Vec3 v_total;  // clamped command including migration
  Vec3 v_rey;    // separation + cohesion only
};

/// Full command for one agent. `goal == nullptr` disables migration.
FlockCommand full_command(std::size_t self_idx, std::span<const AgentState> agents,
                          const Vec3* goal, const FlockParams& params);

Vec3 world_to_body(double yaw, const Vec3& v_world);
Vec3 body_to_world(double yaw, const Vec3& v_body);

/// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

/// Yaw aligned with the horizontal projection of `velocity`; keeps
/// `previous_yaw` when that projection is shorter than 1e-6 m/s.
double heading_from_velocity(const Vec3& velocity, double previous_yaw);

}  // namespace vflock
