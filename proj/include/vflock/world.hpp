#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "vflock/flocking.hpp"
#include "vflock/rng.hpp"

namespace vflock {

enum class Tracking { Perfect, Lag };

struct WorldConfig {
  double dt = 0.1;                 // s, 10 Hz control and camera rate
  double spawn_cube_side = 4.0;    // m
  double spawn_min_dist = 1.5;     // m
  double goal_radius = 1.0;        // m
  double collision_thresh = 1.0;   // m
  double dispersion_thresh = 7.0;  // m
  int max_steps = 2000;
  std::uint64_t rng_seed = 0;
  Tracking tracking = Tracking::Perfect;
  double lag_tau = 0.3;  // s, only used with Tracking::Lag

  void validate() const;
};

enum class Outcome { GoalReached, Collision, Dispersion, MaxSteps };

std::string_view to_string(Outcome o);

struct RunOutcome {
  Outcome kind = Outcome::MaxSteps;
  int step = 0;

  friend bool operator==(const RunOutcome&, const RunOutcome&) = default;
};

/// Rejection-samples n agents inside the spawn cube centred at the origin,
/// each at least spawn_min_dist from all others. Gives up with
/// Error{InfeasibleSpawn} after 10,000 rejected candidates.
std::vector<AgentState> spawn_agents(const WorldConfig& config, int n, Rng& rng);

/// Advances every agent by one control period.
std::vector<AgentState> step(std::span<const AgentState> agents, std::span<const Vec3> commands,
                             const WorldConfig& config);

/// Termination check after a step; nullopt means continue. `goals` holds one
/// optional goal per agent (an agent without a goal can never reach one).
/// Priority on simultaneous events: Collision, then Dispersion, then GoalReached.
std::optional<Outcome> check_termination(std::span<const AgentState> agents,
                                         std::span<const std::optional<Vec3>> goals,
                                         const WorldConfig& config);

}  // namespace vflock
