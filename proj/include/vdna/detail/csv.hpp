#pragma once

// Minimal CSV handling for the numeric tables this project exchanges:
// ',' separator, '\n' line endings, no quoting.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vdna/detail/binio.hpp"
#include "vdna/error.hpp"

namespace vdna::detail {

using CsvRow = std::vector<std::string>;

inline CsvRow split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  CsvRow cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::vector<CsvRow> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<CsvRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

inline double parse_double(const std::string& s, const std::string& context) {
  // std::from_chars for double is available from GCC 11.
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw FormatError(context + ": cannot parse '" + s + "' as a number");
  }
  return v;
}

/// Shortest representation that round-trips.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace vdna::detail
