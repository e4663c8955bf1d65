#pragma once

// Clock synchronization and forward-fill alignment of multi-rate streams.

#include "common.hpp"
#include "csv.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

namespace glda {

/// A named stream with one or more value columns per timestamp.
struct TimedSeries {
  std::string name;
  Table data;

  std::size_t size() const { return data.rows(); }
};

/// Rows are the union of stream timestamps; each cell is forward-filled.
using AlignedFrame = Table;

/// Spreads a clock drift linearly over the series: sample i (zero-based) moves
/// by i * total_shift / N.  Values are untouched.
inline TimedSeries synchronize(const TimedSeries& series, double total_shift_seconds) {
  const std::size_t N = series.size();
  if (N == 0) throw ConfigError("synchronize: series '" + series.name + "' is empty");
  TimedSeries out = series;
  const long double shift_ns = static_cast<long double>(total_shift_seconds) * Timestamp::kPerSecond;
  for (std::size_t i = 0; i < N; ++i) {
    const long double delta = shift_ns * static_cast<long double>(i) / static_cast<long double>(N);
    out.data.times[i].ns += static_cast<std::int64_t>(std::llroundl(delta));
    if (i > 0 && out.data.times[i] <= out.data.times[i - 1])
      throw ConfigError("synchronize: shift " + format_double(total_shift_seconds) +
                        " s makes timestamps of '" + series.name + "' non-monotonic at sample " +
                        std::to_string(i));
  }
  return out;
}

/// Column name of stream column c inside an aligned frame.
inline std::string aligned_column_name(const TimedSeries& s, std::size_t c) {
  if (s.data.width() == 1 && s.data.columns[0] == "value") return s.name;
  return s.name + "." + s.data.columns[c];
}

/// Merges streams onto the sorted union of their timestamps, starting at the
/// latest first-timestamp so every cell has a defined predecessor.  Each cell
/// holds the stream's most recent value at or before the row time.
inline AlignedFrame align(const std::vector<TimedSeries>& streams) {
  if (streams.empty()) throw ConfigError("align: no streams given");
  Timestamp start{std::numeric_limits<std::int64_t>::min()};
  for (const auto& s : streams) {
    if (s.size() == 0) throw ConfigError("align: stream '" + s.name + "' is empty");
    start = std::max(start, s.data.times.front());
  }
  AlignedFrame frame;
  for (const auto& s : streams)
    for (std::size_t c = 0; c < s.data.width(); ++c) frame.columns.push_back(aligned_column_name(s, c));

  std::vector<Timestamp> grid;
  for (const auto& s : streams)
    for (const auto& t : s.data.times)
      if (t >= start) grid.push_back(t);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::vector<std::size_t> cursor(streams.size(), 0);
  std::vector<double> row(frame.width());
  frame.times.reserve(grid.size());
  frame.values.reserve(grid.size() * frame.width());
  for (const auto& t : grid) {
    std::size_t col = 0;
    for (std::size_t s = 0; s < streams.size(); ++s) {
      const auto& times = streams[s].data.times;
      while (cursor[s] + 1 < times.size() && times[cursor[s] + 1] <= t) ++cursor[s];
      for (double v : streams[s].data.row(cursor[s])) row[col++] = v;
    }
    frame.append(t, row);
  }
  return frame;
}

/// Most recent row at or before t, or -1 if t precedes the first row.
inline long row_at_or_before(const Table& table, Timestamp t) {
  const auto it = std::upper_bound(table.times.begin(), table.times.end(), t);
  return static_cast<long>(it - table.times.begin()) - 1;
}

/// Reads one stream.  `schema` lists the expected value columns; empty
/// accepts any header that starts with `timestamp`.
inline TimedSeries read_series_csv(const std::string& path, const std::string& name,
                                   const std::vector<std::string>& schema = {}) {
  return {name, read_table_file(path, schema)};
}

inline void write_frame_csv(const AlignedFrame& frame, const std::string& path) {
  write_table_file(path, frame);
}

inline AlignedFrame read_frame_csv(const std::string& path) { return read_table_file(path); }

}  // namespace glda
