#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "vflock/flocking.hpp"

namespace vflock {

struct DistanceExtremes {
  double d_min = 0.0;
  double d_max = 0.0;
};

/// Minimum and maximum distance over unordered agent pairs.
/// Throws Error{UndefinedMetric} for fewer than two agents.
DistanceExtremes min_max_distance(std::span<const Vec3> positions);
DistanceExtremes min_max_distance(std::span<const AgentState> agents);

/// Mean pairwise cosine similarity of the velocities. Returns nullopt when
/// any velocity is shorter than 1e-9 (the cosine is undefined there).
/// Throws Error{UndefinedMetric} for fewer than two agents.
std::optional<double> order_parameter(std::span<const Vec3> velocities);

struct MetricsRow {
  int step = 0;
  double d_min = 0.0;
  double d_max = 0.0;
  std::optional<double> order;
};

using MetricsSeries = std::vector<MetricsRow>;

MetricsRow measure(int step, std::span<const AgentState> agents);

/// CSV "step,d_min,d_max,order"; a missing order value is an empty field.
void write_metrics_csv(const std::filesystem::path& path, const MetricsSeries& series);

}  // namespace vflock
