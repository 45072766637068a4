#pragma once

// Number formatting shared by the CSV writers. Internal.

#include <charconv>
#include <string>

namespace tpi::detail {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace tpi::detail
