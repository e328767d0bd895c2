#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vflock/flocking.hpp"
#include "vflock/metrics.hpp"
#include "vflock/nn/network.hpp"
#include "vflock/render.hpp"
#include "vflock/world.hpp"

namespace vflock {

/// Position-based reference controller: the full flocking command.
Vec3 position_cmd(std::size_t agent_idx, std::span<const AgentState> agents, const Vec3* goal,
                  const FlockParams& params);

/// Maps a rendered view to a body-frame Reynolds velocity.
using BodyPredictor = std::function<Vec3(const CubeImage&)>;

/// Standardises with the network's stored statistics and runs an eval-mode
/// forward pass. A non-finite network output yields a non-finite vector.
class NetworkPredictor {
 public:
  explicit NetworkPredictor(const nn::Network& net);
  Vec3 operator()(const CubeImage& image) const;

 private:
  const nn::Network* net_;
};

/// Exponential smoothing, out = alpha * new + (1 - alpha) * previous.
class LowPassFilter {
 public:
  LowPassFilter(std::size_t agents, double alpha);
  Vec3 apply(std::size_t agent, const Vec3& command);
  double alpha() const { return alpha_; }

 private:
  double alpha_;
  std::vector<std::optional<Vec3>> previous_;
};

struct VisionCommand {
  Vec3 command;
  bool fault = false;  // prediction was non-finite; command forced to zero
};

/// predict (body) -> rotate to world -> add migration -> clamp -> optional filter.
VisionCommand vision_cmd(const AgentState& agent, const CubeImage& image, const Vec3* goal,
                         const FlockParams& params, const BodyPredictor& predict,
                         LowPassFilter* filter = nullptr, std::size_t filter_slot = 0);

struct PositionBased {};
struct VisionBased {
  const nn::Network* network = nullptr;
  std::optional<double> filter_alpha;  // nullopt: raw commands
};
using ControllerKind = std::variant<PositionBased, VisionBased>;

enum class GoalMode { Common, Opposing, None };

std::string_view to_string(GoalMode m);

/// Per-agent goals: common puts every goal `distance` metres along +x;
/// opposing sends the first ceil(5n/9) agents to +x and the rest to -x.
std::vector<std::optional<Vec3>> make_goals(GoalMode mode, int n, double distance);

struct EpisodeConfig {
  WorldConfig world;
  FlockParams flock;
  CameraRig rig = CameraRig::standard();
  RenderStyle style;
  GoalMode goals = GoalMode::Common;
  double goal_distance = 15.0;
  bool stop_at_goal = true;  // spawn seed comes from world.rng_seed
};

struct TrajectoryRow {
  int step = 0;
  int agent_id = 0;
  Vec3 position;
  Vec3 velocity;
  double yaw = 0.0;
  Vec3 command;
};

struct EpisodeResult {
  std::vector<TrajectoryRow> trajectory;
  MetricsSeries metrics;
  RunOutcome outcome;
  std::vector<std::string> faults;
};

/// Closed-loop episode. Every controller sees the same snapshot within a
/// step; the world then advances synchronously.
EpisodeResult run_episode(const ControllerKind& kind, const EpisodeConfig& config);

/// Variant with explicit per-agent goals and starting state.
EpisodeResult run_episode(const ControllerKind& kind, const EpisodeConfig& config,
                          std::vector<AgentState> agents, std::span<const std::optional<Vec3>> goals);

void write_trajectory_csv(const std::filesystem::path& path, std::span<const TrajectoryRow> rows);

}  // namespace vflock
