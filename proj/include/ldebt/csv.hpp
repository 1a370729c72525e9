#pragma once

// Minimal CSV helpers. Floats are written with 17 significant digits so that
// every value round-trips exactly through strtod.

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "ldebt/errors.hpp"

namespace ldebt::csv {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw Error("bad numeric field '" + s + "'");
  return v;
}

inline long long to_int(const std::string& s) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) throw Error("bad integer field '" + s + "'");
  return v;
}

/// Reads all rows; the first row is returned separately as the header.
inline std::vector<std::vector<std::string>> read_rows(std::istream& in,
                                                       std::vector<std::string>* header) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      if (header) *header = split(line);
      first = false;
      continue;
    }
    rows.push_back(split(line));
  }
  return rows;
}

}  // namespace ldebt::csv
