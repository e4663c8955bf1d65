#pragma once

// Timestamped numeric tables and their CSV form.
//
// Every file has a header whose first field is `timestamp`; timestamps are
// decimal seconds converted exactly to/from integer nanoseconds, values are
// written with 17 significant digits so doubles survive a round trip.

#include "common.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace glda {

struct Table {
  std::vector<std::string> columns;  // value columns, timestamp excluded
  std::vector<Timestamp> times;
  std::vector<double> values;  // row-major, times.size() x columns.size()

  std::size_t rows() const { return times.size(); }
  std::size_t width() const { return columns.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * width() + c]; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * width(), width()};
  }

  void append(Timestamp t, std::span<const double> row) {
    if (row.size() != width()) throw ConfigError("Table::append: row width mismatch");
    times.push_back(t);
    values.insert(values.end(), row.begin(), row.end());
  }

  // Index of a named column, or -1.
  long column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<long>(i);
    return -1;
  }

  friend bool operator==(const Table&, const Table&) = default;
};

inline std::string format_seconds(Timestamp t) {
  const bool negative = t.ns < 0;
  // Magnitude as unsigned so INT64_MIN does not overflow.
  const auto mag = negative ? 0ULL - static_cast<unsigned long long>(t.ns)
                            : static_cast<unsigned long long>(t.ns);
  const unsigned long long whole = mag / Timestamp::kPerSecond;
  unsigned long long frac = mag % Timestamp::kPerSecond;
  std::string out = negative ? "-" : "";
  out += std::to_string(whole);
  if (frac != 0) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%09llu", frac);
    std::string f(buf);
    while (!f.empty() && f.back() == '0') f.pop_back();
    out += '.' + f;
  }
  return out;
}

inline bool parse_seconds(std::string_view s, Timestamp& out) {
  if (s.empty()) return false;
  if (s.find_first_of("eE") != std::string_view::npos) {
    const std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (*end != '\0' || !std::isfinite(v)) return false;
    out = Timestamp::from_seconds(v);
    return true;
  }
  std::size_t i = 0;
  bool negative = false;
  if (s[i] == '-' || s[i] == '+') negative = s[i++] == '-';
  long long whole = 0;
  std::size_t digits = 0;
  for (; i < s.size() && s[i] >= '0' && s[i] <= '9'; ++i, ++digits) {
    if (whole > (INT64_MAX / Timestamp::kPerSecond) / 10) return false;
    whole = whole * 10 + (s[i] - '0');
  }
  long long frac = 0;
  if (i < s.size() && s[i] == '.') {
    ++i;
    int place = 0;
    bool round_up = false;
    for (; i < s.size() && s[i] >= '0' && s[i] <= '9'; ++i, ++digits, ++place) {
      if (place < 9)
        frac = frac * 10 + (s[i] - '0');
      else if (place == 9)
        round_up = s[i] >= '5';
    }
    for (; place < 9; ++place) frac *= 10;
    if (round_up) ++frac;
  }
  if (i != s.size() || digits == 0) return false;
  const long long ns = whole * Timestamp::kPerSecond + frac;
  out.ns = negative ? -ns : ns;
  return true;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  const std::string tmp(s);
  char* end = nullptr;
  errno = 0;
  out = std::strtod(tmp.c_str(), &end);
  return *end == '\0' && errno != ERANGE && std::isfinite(out);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? comma : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Parses a table.  `expected` (when non-empty) must match the value columns
/// exactly.  Errors carry `source:line`.
inline Table read_table(std::istream& is, const std::string& source,
                        const std::vector<std::string>& expected = {}) {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw IoError(source + ":" + std::to_string(line_no) + ": " + what);
  };
  Table t;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) break;
  }
  if (line.empty()) fail("missing header");
  const auto header = split_fields(line);
  if (header.front() != "timestamp") fail("header must start with 'timestamp'");
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i].empty()) fail("empty column name");
    t.columns.emplace_back(header[i]);
  }
  if (!expected.empty() && t.columns != expected) {
    std::string want = "timestamp";
    for (const auto& c : expected) want += "," + c;
    fail("header mismatch, expected '" + want + "'");
  }
  std::vector<double> row(t.width());
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != t.width() + 1)
      fail("expected " + std::to_string(t.width() + 1) + " fields, found " +
           std::to_string(fields.size()));
    Timestamp ts;
    if (!parse_seconds(fields[0], ts)) fail("malformed timestamp '" + std::string(fields[0]) + "'");
    if (!t.times.empty() && ts <= t.times.back()) fail("timestamps not strictly increasing");
    for (std::size_t c = 0; c < t.width(); ++c)
      if (!parse_double(fields[c + 1], row[c]))
        fail("malformed value '" + std::string(fields[c + 1]) + "' in column " + t.columns[c]);
    t.append(ts, row);
  }
  return t;
}

inline Table read_table_file(const std::string& path, const std::vector<std::string>& expected = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_table(is, path, expected);
}

inline void write_table(std::ostream& os, const Table& t) {
  os << "timestamp";
  for (const auto& c : t.columns) os << ',' << c;
  os << '\n';
  for (std::size_t r = 0; r < t.rows(); ++r) {
    os << format_seconds(t.times[r]);
    for (double v : t.row(r)) os << ',' << format_double(v);
    os << '\n';
  }
}

inline void write_table_file(const std::string& path, const Table& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_table(os, t);
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace glda
