#pragma once

#include <charconv>
#include <cstdio>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "atecr/errors.hpp"

namespace atecr {

// Numeric output is always written with 17 significant digits so that values
// survive a write/parse round trip bitwise.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.emplace_back(line.substr(start));
      break;
    }
    cells.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
    std::size_t i = 0;
    while (i < c.size() && c[i] == ' ') ++i;
    c.erase(0, i);
  }
  return cells;
}

inline double parse_double_cell(const std::string& cell, std::size_t row,
                                const std::string& column) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw ParseError("non-numeric cell '" + cell + "' in column '" + column +
                     "' at data row " + std::to_string(row));
  }
  return value;
}

// Splits CSV text into a header row plus data rows. Requires a header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(std::string_view text) {
  CsvTable table;
  std::size_t start = 0;
  bool first = true;
  while (start <= text.size()) {
    std::size_t pos = text.find('\n', start);
    std::string_view line =
        (pos == std::string_view::npos) ? text.substr(start) : text.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      auto cells = split_csv_line(line);
      if (first) {
        table.header = std::move(cells);
        first = false;
      } else {
        table.rows.push_back(std::move(cells));
      }
    }
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (first) throw ParseError("CSV input is empty (header row is mandatory)");
  return table;
}

}  // namespace atecr
