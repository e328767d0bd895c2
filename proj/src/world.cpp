#include "vflock/world.hpp"

#include <cmath>
#include <string>

#include "vflock/error.hpp"

namespace vflock {

namespace {
constexpr int kMaxSpawnAttempts = 10'000;
}

void WorldConfig::validate() const {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
  if (!(spawn_cube_side > 0.0))
    throw Error(ErrorKind::InvalidArgument, "spawn_cube_side must be positive");
  if (spawn_min_dist < 0.0 || !(spawn_min_dist < spawn_cube_side * std::sqrt(3.0)))
    throw Error(ErrorKind::InvalidArgument, "spawn_min_dist must be below the cube diagonal");
  if (!(collision_thresh <= dispersion_thresh))
    throw Error(ErrorKind::InvalidArgument, "collision_thresh must not exceed dispersion_thresh");
  if (max_steps < 1) throw Error(ErrorKind::InvalidArgument, "max_steps must be positive");
  if (tracking == Tracking::Lag && !(lag_tau > 0.0))
    throw Error(ErrorKind::InvalidArgument, "lag_tau must be positive");
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::GoalReached: return "goal_reached";
    case Outcome::Collision: return "collision";
    case Outcome::Dispersion: return "dispersion";
    case Outcome::MaxSteps: return "max_steps";
  }
  return "unknown";
}

std::vector<AgentState> spawn_agents(const WorldConfig& config, int n, Rng& rng) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "spawn count must be at least 1");
  const double half = 0.5 * config.spawn_cube_side;
  const double min_d2 = config.spawn_min_dist * config.spawn_min_dist;

  std::vector<AgentState> agents;
  agents.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxSpawnAttempts && !placed; ++attempt) {
      const Vec3 p{rng.uniform(-half, half), rng.uniform(-half, half), rng.uniform(-half, half)};
      bool ok = true;
      for (const auto& a : agents) {
        if (squared_norm(a.position - p) < min_d2) {
          ok = false;
          break;
        }
      }
      if (ok) {
        agents.push_back(AgentState{i, p, {}, 0.0});
        placed = true;
      }
    }
    if (!placed)
      throw Error(ErrorKind::InfeasibleSpawn,
                  "could not place agent " + std::to_string(i) + " of " + std::to_string(n) +
                      " after " + std::to_string(kMaxSpawnAttempts) + " attempts");
  }
  return agents;
}

std::vector<AgentState> step(std::span<const AgentState> agents, std::span<const Vec3> commands,
                             const WorldConfig& config) {
  if (agents.size() != commands.size())
    throw Error(ErrorKind::InvalidArgument, "step needs exactly one command per agent");

  const double blend =
      config.tracking == Tracking::Lag ? 1.0 - std::exp(-config.dt / config.lag_tau) : 1.0;

  std::vector<AgentState> next(agents.begin(), agents.end());
  for (std::size_t i = 0; i < next.size(); ++i) {
    const Vec3& cmd = commands[i];
    if (!is_finite(cmd))
      throw Error(ErrorKind::InvalidArgument,
                  "non-finite command for agent " + std::to_string(agents[i].id));
    auto& a = next[i];
    if (config.tracking == Tracking::Perfect) {
      a.velocity = cmd;
    } else {
      a.velocity += (cmd - a.velocity) * blend;
    }
    a.position += a.velocity * config.dt;
    a.yaw = heading_from_velocity(cmd, a.yaw);
  }
  return next;
}

std::optional<Outcome> check_termination(std::span<const AgentState> agents,
                                         std::span<const std::optional<Vec3>> goals,
                                         const WorldConfig& config) {
  bool collision = false;
  bool dispersion = false;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    for (std::size_t j = i + 1; j < agents.size(); ++j) {
      const double d = norm(agents[j].position - agents[i].position);
      if (d < config.collision_thresh) collision = true;
      if (d > config.dispersion_thresh) dispersion = true;
    }
  }
  if (collision) return Outcome::Collision;
  if (dispersion) return Outcome::Dispersion;

  for (std::size_t i = 0; i < agents.size() && i < goals.size(); ++i) {
    if (goals[i] && norm(*goals[i] - agents[i].position) <= config.goal_radius)
      return Outcome::GoalReached;
  }
  return std::nullopt;
}

}  // namespace vflock
