#pragma once

#include <cstdio>
#include <string>

namespace vflock {

/// Shortest-ish stable decimal rendering used by every CSV writer.
inline std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace vflock
