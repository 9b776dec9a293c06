#pragma once

#include <cstdio>
#include <string>

namespace dear::detail {

/// Shortest-safe text form of a double: 17 significant digits round-trip.
inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace dear::detail
