#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pilf/error.hpp"

namespace pilf::csv {

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Empty field maps to nullopt; anything that is not a complete finite number throws.
inline std::optional<double> parse_optional_double(std::string_view field) {
  field = trim(field);
  if (field.empty()) return std::nullopt;
  std::string buf(field);
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || errno == ERANGE || !std::isfinite(v)) {
    throw Error("csv", "not a finite number: '" + buf + "'");
  }
  return v;
}

inline double parse_double(std::string_view field) {
  auto v = parse_optional_double(field);
  if (!v) throw Error("csv", "required numeric field is empty");
  return *v;
}

/// Round-trippable decimal text for a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct LineReader {
  std::ifstream in;
  std::size_t line_no = 0;

  explicit LineReader(const std::string& path) : in(path) {
    if (!in) throw Error("csv", "cannot open file", path);
  }

  // Skips blank lines and '#' comment lines.
  bool next(std::string& line) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      return true;
    }
    return false;
  }
};

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write file", path);
  out << content;
  if (!out) throw Error("io", "write failed", path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open file", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace pilf::csv
