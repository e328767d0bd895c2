#include "vflock/error.hpp"

namespace vflock {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::DataFormat: return "data-format";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::InfeasibleSpawn: return "infeasible-spawn";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::DegenerateGeometry: return "degenerate-geometry";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
  }
  return "unknown";
}

}  // namespace vflock
