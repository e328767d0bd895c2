#include "vflock/controller.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "vflock/error.hpp"
#include "vflock/format.hpp"
#include "vflock/nn/train.hpp"

namespace vflock {

Vec3 position_cmd(std::size_t agent_idx, std::span<const AgentState> agents, const Vec3* goal,
                  const FlockParams& params) {
  return full_command(agent_idx, agents, goal, params).v_total;
}

NetworkPredictor::NetworkPredictor(const nn::Network& net) : net_(&net) {
  if (!(net.pixel_std > 0.0f))
    throw Error(ErrorKind::Config, "vision controller needs a network with standardisation statistics");
  const auto& in = net.input_shape();
  if (in.channels != 1 || in.height != kImageHeight || in.width != kImageWidth || net.output_size() != 3)
    throw Error(ErrorKind::Config, "vision controller needs a 1x64x384 -> 3 network");
}

Vec3 NetworkPredictor::operator()(const CubeImage& image) const {
  nn::Tensor x({1, 1, kImageHeight, kImageWidth});
  nn::standardize(image.pixels, net_->pixel_mean, net_->pixel_std, x.values());
  try {
    const nn::Tensor y = nn::forward(*net_, x, nn::Mode::Eval);
    return {static_cast<double>(y[0]), static_cast<double>(y[1]), static_cast<double>(y[2])};
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Divergence) throw;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan};
  }
}

LowPassFilter::LowPassFilter(std::size_t agents, double alpha) : alpha_(alpha), previous_(agents) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorKind::Config, "filter alpha must be in (0,1]");
}

Vec3 LowPassFilter::apply(std::size_t agent, const Vec3& command) {
  auto& prev = previous_.at(agent);
  const Vec3 out = prev ? command * alpha_ + *prev * (1.0 - alpha_) : command;
  prev = out;
  return out;
}

VisionCommand vision_cmd(const AgentState& agent, const CubeImage& image, const Vec3* goal,
                         const FlockParams& params, const BodyPredictor& predict,
                         LowPassFilter* filter, std::size_t filter_slot) {
  const Vec3 body = predict(image);
  if (!is_finite(body)) return {Vec3{}, true};
  Vec3 total = body_to_world(agent.yaw, body);
  if (goal != nullptr) total += migration_cmd(*goal - agent.position, params.k_mig);
  Vec3 cmd = clamp_speed(total, params.v_max);
  if (filter != nullptr) cmd = filter->apply(filter_slot, cmd);
  return {cmd, false};
}

std::string_view to_string(GoalMode m) {
  switch (m) {
    case GoalMode::Common: return "common";
    case GoalMode::Opposing: return "opposing";
    case GoalMode::None: return "none";
  }
  return "unknown";
}

std::vector<std::optional<Vec3>> make_goals(GoalMode mode, int n, double distance) {
  std::vector<std::optional<Vec3>> goals(static_cast<std::size_t>(n));
  const int first_group = (5 * n + 8) / 9;
  for (int i = 0; i < n; ++i) {
    switch (mode) {
      case GoalMode::Common: goals[static_cast<std::size_t>(i)] = Vec3{distance, 0, 0}; break;
      case GoalMode::Opposing:
        goals[static_cast<std::size_t>(i)] = Vec3{i < first_group ? distance : -distance, 0, 0};
        break;
      case GoalMode::None: break;
    }
  }
  return goals;
}

EpisodeResult run_episode(const ControllerKind& kind, const EpisodeConfig& config) {
  config.world.validate();
  config.flock.validate();
  Rng rng(config.world.rng_seed);
  auto agents = spawn_agents(config.world, config.flock.n_agents, rng);
  const auto goals = make_goals(config.goals, config.flock.n_agents, config.goal_distance);
  return run_episode(kind, config, std::move(agents), goals);
}

EpisodeResult run_episode(const ControllerKind& kind, const EpisodeConfig& config,
                          std::vector<AgentState> agents, std::span<const std::optional<Vec3>> goals) {
  if (goals.size() != agents.size())
    throw Error(ErrorKind::InvalidArgument, "one goal slot per agent required");

  const auto* vision = std::get_if<VisionBased>(&kind);
  std::optional<NetworkPredictor> predictor;
  std::optional<LowPassFilter> filter;
  if (vision != nullptr) {
    if (vision->network == nullptr) throw Error(ErrorKind::Config, "vision controller needs a network");
    predictor.emplace(*vision->network);
    if (vision->filter_alpha) filter.emplace(agents.size(), *vision->filter_alpha);
  }

  std::vector<std::optional<Vec3>> stop_goals(goals.begin(), goals.end());
  if (!config.stop_at_goal) std::fill(stop_goals.begin(), stop_goals.end(), std::nullopt);

  EpisodeResult result;
  const bool measurable = agents.size() >= 2;
  if (measurable) result.metrics.push_back(measure(0, agents));

  std::vector<Vec3> commands(agents.size());
  result.outcome = {Outcome::MaxSteps, config.world.max_steps};
  for (int t = 0; t < config.world.max_steps; ++t) {
    // Commands come from one snapshot; nothing moves until all are computed.
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const Vec3* goal = goals[i] ? &*goals[i] : nullptr;
      if (vision == nullptr) {
        commands[i] = position_cmd(i, agents, goal, config.flock);
      } else {
        const CubeImage view = render_agent_view(i, agents, config.rig, config.style);
        const auto vc = vision_cmd(agents[i], view, goal, config.flock, *predictor,
                                   filter ? &*filter : nullptr, i);
        commands[i] = vc.command;
        if (vc.fault)
          result.faults.push_back("step " + std::to_string(t) + " agent " +
                                  std::to_string(agents[i].id) + ": non-finite prediction");
      }
      result.trajectory.push_back(
          {t, agents[i].id, agents[i].position, agents[i].velocity, agents[i].yaw, commands[i]});
    }

    agents = step(agents, commands, config.world);
    if (measurable) result.metrics.push_back(measure(t + 1, agents));

    if (const auto end = check_termination(agents, stop_goals, config.world)) {
      result.outcome = {*end, t + 1};
      break;
    }
  }
  return result;
}

void write_trajectory_csv(const std::filesystem::path& path, std::span<const TrajectoryRow> rows) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << "step,agent_id,px,py,pz,vx,vy,vz,yaw,cmd_x,cmd_y,cmd_z\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.agent_id;
    for (double v : {r.position.x, r.position.y, r.position.z, r.velocity.x, r.velocity.y,
                     r.velocity.z, r.yaw, r.command.x, r.command.y, r.command.z})
      out << ',' << fmt_real(v);
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace vflock
