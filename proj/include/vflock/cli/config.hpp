#pragma once

// Flat `key = value` experiment configuration. Lines starting with '#' are
// comments; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vflock/controller.hpp"
#include "vflock/dataset.hpp"
#include "vflock/nn/train.hpp"

namespace vflock::cli {

enum class ControllerChoice { Position, Vision };

struct ExperimentConfig {
  std::uint64_t seed = 0;
  FlockParams flock;
  WorldConfig world;
  RenderStyle style;
  nn::TrainConfig train;
  SplitCounts counts;
  double goal_distance = 15.0;
  double cone_half_angle_deg = 15.0;
  double cone_speed = 2.0;
  ControllerChoice controller = ControllerChoice::Position;
  std::string checkpoint;  // empty: none
  GoalMode goals = GoalMode::Common;
  bool stop_at_goal = true;
  std::optional<double> filter_alpha;

  /// Keys that were given explicitly (file or override).
  std::set<std::string> explicit_keys;

  /// Applies one key; throws Error{Config} for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Canonical text form listing every key; parsing it yields this config.
  std::string to_text() const;
  /// Keys that still hold their defaults.
  std::vector<std::string> defaulted_keys() const;

  GenerationConfig generation() const;
  EpisodeConfig episode() const;
  void validate() const;
};

/// All recognised keys, in canonical order.
const std::vector<std::string>& config_keys();

ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace vflock::cli
