#pragma once

// Small text and file helpers shared by the parsers and writers.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "morphsim/error.hpp"

namespace morphsim::detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  std::size_t start = 0;
  // skip a UTF-8 byte order mark
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) start = 3;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      if (!current.empty() && current.back() == '\r') current.pop_back();
      lines.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) lines.push_back(std::move(current));
  return lines;
}

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");
  out << content;
  if (!out) fail(ErrorCode::IoFailure, "write failed for '" + path.string() + "'");
}

/// Numeric CSV body under an exact header row.
inline std::vector<std::vector<double>> parse_numeric_table(const std::string& text, const std::vector<std::string>& header) {
  const auto lines = split_lines(text);
  std::size_t li = 0;
  while (li < lines.size() && trim(lines[li]).empty()) ++li;
  if (li == lines.size()) fail(ErrorCode::EmptyFile, "no header row");
  auto cols = split_csv_row(lines[li]);
  for (auto& c : cols) c = trim(c);
  if (cols != header) {
    std::string expected;
    for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
    fail(ErrorCode::SchemaMismatch, "header '" + trim(lines[li]) + "' does not match expected '" + expected + "'");
  }
  std::vector<std::vector<double>> rows;
  for (++li; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const auto cells = split_csv_row(lines[li]);
    const std::size_t row_index = rows.size();
    if (cells.size() != header.size())
      fail(ErrorCode::SchemaMismatch, "row " + std::to_string(row_index) + " has " + std::to_string(cells.size()) +
                                          " columns, expected " + std::to_string(header.size()));
    std::vector<double> values;
    values.reserve(cells.size());
    for (const auto& cell : cells) {
      const auto v = parse_double(trim(cell));
      if (!v) fail(ErrorCode::MalformedRow, "row " + std::to_string(row_index) + ": non-numeric cell '" + cell + "'");
      values.push_back(*v);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) fail(ErrorCode::EmptyFile, "no data rows");
  return rows;
}

}  // namespace morphsim::detail
