#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

namespace mono3d {

// Shortest decimal representation that parses back to the same double.
inline std::string FormatDouble(double value) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

// Strips a trailing '#' comment and splits on ASCII whitespace.
std::vector<std::string_view> SplitFields(std::string_view line);

// Strict full-token parses; return false on trailing garbage or overflow.
bool ParseDouble(std::string_view token, double* value);
bool ParseInt(std::string_view token, long long* value);

}  // namespace mono3d
