#pragma once

// Line-oriented "tag key=value key=value" records shared by the pose,
// chunk and trace formats. Floats are printed with 17 significant digits.

#include <cstdio>
#include <cstdlib>
#include <initializer_list>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wam/error.hpp"

namespace wam::record {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Range>
std::string join_range(const Range& values) {
  std::string out;
  bool first = true;
  for (double v : values) {
    if (!first) out += ',';
    out += fmt(v);
    first = false;
  }
  return out;
}

inline std::string join(std::initializer_list<double> values) { return join_range(values); }

struct Line {
  std::string tag;
  std::vector<std::pair<std::string, std::string>> fields;

  bool has(const std::string& key) const {
    for (const auto& [k, v] : fields)
      if (k == key) return true;
    return false;
  }
  const std::string& get(const std::string& key) const {
    for (const auto& [k, v] : fields)
      if (k == key) return v;
    throw ValidationError("record '" + tag + "' is missing field '" + key + "'");
  }
};

inline Line parse_line(const std::string& text) {
  std::istringstream is(text);
  Line line;
  is >> line.tag;
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    require(eq != std::string::npos && eq > 0, "malformed field '" + tok + "' in record '" + line.tag + "'");
    line.fields.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return line;
}

inline double number(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  require(end != s.c_str() && *end == '\0', "not a number: '" + s + "'");
  return v;
}

inline long long integer(const std::string& s) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  require(end != s.c_str() && *end == '\0', "not an integer: '" + s + "'");
  return v;
}

/// Comma-separated list; `expected` < 0 accepts any length.
inline std::vector<double> numbers(const std::string& s, int expected = -1) {
  std::vector<double> out;
  if (!s.empty()) {
    std::size_t start = 0;
    while (true) {
      const auto comma = s.find(',', start);
      out.push_back(number(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  require(expected < 0 || static_cast<int>(out.size()) == expected,
          "expected " + std::to_string(expected) + " values, got " + std::to_string(out.size()));
  return out;
}

}  // namespace wam::record
