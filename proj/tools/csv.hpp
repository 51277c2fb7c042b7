#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ki67/error.hpp"

namespace ki67::cli {

// Comma-separated table without quoting; the first row is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  return out;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Input, "cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) fail(ErrorKind::Input, "empty CSV: " + path.string());
  t.header = split_csv_line(line);
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    auto row = split_csv_line(line);
    if (row.size() != t.header.size()) {
      fail(ErrorKind::Input, path.string() + ": row " + std::to_string(t.rows.size() + 2) +
                                 " has " + std::to_string(row.size()) + " fields, expected " +
                                 std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline int require_column(const CsvTable& t, const std::string& name,
                          const std::filesystem::path& path) {
  const int c = t.column(name);
  if (c < 0) fail(ErrorKind::Input, path.string() + ": missing column '" + name + "'");
  return c;
}

}  // namespace ki67::cli
