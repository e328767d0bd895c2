#include "vflock/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "vflock/error.hpp"
#include "vflock/format.hpp"

namespace vflock {

DistanceExtremes min_max_distance(std::span<const Vec3> positions) {
  if (positions.size() < 2)
    throw Error(ErrorKind::UndefinedMetric, "inter-agent distance needs at least two agents");
  DistanceExtremes e{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      const double d = norm(positions[j] - positions[i]);
      e.d_min = std::min(e.d_min, d);
      e.d_max = std::max(e.d_max, d);
    }
  }
  return e;
}

DistanceExtremes min_max_distance(std::span<const AgentState> agents) {
  std::vector<Vec3> p;
  p.reserve(agents.size());
  for (const auto& a : agents) p.push_back(a.position);
  return min_max_distance(p);
}

std::optional<double> order_parameter(std::span<const Vec3> velocities) {
  const std::size_t n = velocities.size();
  if (n < 2) throw Error(ErrorKind::UndefinedMetric, "order parameter needs at least two agents");
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = norm(velocities[i]);
    if (!(norms[i] > 1e-9)) return std::nullopt;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum += dot(velocities[i], velocities[j]) / (norms[i] * norms[j]);
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1));
}

MetricsRow measure(int step, std::span<const AgentState> agents) {
  MetricsRow row;
  row.step = step;
  const auto d = min_max_distance(agents);
  row.d_min = d.d_min;
  row.d_max = d.d_max;
  std::vector<Vec3> v;
  v.reserve(agents.size());
  for (const auto& a : agents) v.push_back(a.velocity);
  row.order = order_parameter(v);
  return row;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsSeries& series) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << "step,d_min,d_max,order\n";
  for (const auto& r : series) {
    out << r.step << ',' << fmt_real(r.d_min) << ',' << fmt_real(r.d_max) << ',';
    if (r.order) out << fmt_real(*r.order);
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace vflock
