#pragma once

// Electrical features over fixed-length raw windows and pattern-window
// assembly.
//
// Per raw window of voltage v[n] and current i[n]:
//   P = mean(v * i)                                  active power
//   Q = sqrt(max(0, (Vrms * Irms)^2 - P^2))          reactive power (magnitude)
//   band b = sqrt(sum of one-sided power of current bins in band b)
// The one-sided spectrum is normalized so that summing every bin from DC to
// Nyquist gives the mean square of the current (Parseval).  No taper is
// applied before the transform.

#include "align.hpp"
#include "common.hpp"
#include "csv.hpp"
#include "inference.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

namespace glda {

struct RawWindow {
  std::span<const double> voltage;
  std::span<const double> current;
  double rate = 0.0;  // samples per second
  Timestamp start_time;

  void validate() const {
    if (voltage.size() != current.size())
      throw ConfigError("raw window: voltage and current lengths differ");
    if (voltage.size() < 2) throw ConfigError("raw window: fewer than 2 samples");
    if (!(rate > 0.0)) throw ConfigError("raw window: sample rate must be > 0");
  }
};

struct BandSpec {
  std::vector<double> edges;  // Hz, strictly ascending

  std::size_t count() const { return edges.empty() ? 0 : edges.size() - 1; }

  void validate(double rate) const {
    if (edges.size() < 2) throw ConfigError("band edges: need at least two edges");
    if (edges.front() < 0.0) throw ConfigError("band edges: first edge must be >= 0");
    for (std::size_t i = 1; i < edges.size(); ++i)
      if (!(edges[i] > edges[i - 1])) throw ConfigError("band edges must be strictly ascending");
    if (edges.back() > rate / 2.0 * (1.0 + 1e-12))
      throw ConfigError("band edge " + format_double(edges.back()) + " Hz exceeds Nyquist " +
                        format_double(rate / 2.0) + " Hz");
  }

  // Eight bands: [0, ny/128), [ny/128, ny/64), ..., [ny/2, ny].
  static BandSpec log_default(double rate, int bands = 8) {
    const double nyquist = rate / 2.0;
    BandSpec spec;
    spec.edges.push_back(0.0);
    for (int b = bands - 1; b >= 0; --b) spec.edges.push_back(nyquist / std::pow(2.0, b));
    return spec;
  }
};

struct FeatureVector {
  Timestamp timestamp;
  double active_power = 0.0;
  double reactive_power = 0.0;
  std::vector<double> band_rms;
  std::vector<double> exogenous;  // leading then trailing columns of the layout
};

inline double active_power(const RawWindow& w) {
  w.validate();
  double acc = 0.0;
  for (std::size_t n = 0; n < w.voltage.size(); ++n) acc += w.voltage[n] * w.current[n];
  return acc / static_cast<double>(w.voltage.size());
}

inline double mean_square(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

inline double rms(std::span<const double> x) { return std::sqrt(mean_square(x)); }

// S^2 is formed from the mean squares, not from squared RMS values, so that
// in-phase inputs cancel exactly instead of leaving sqrt(rounding) behind.
inline double reactive_power(const RawWindow& w) {
  const double p = active_power(w);
  const double apparent_sq = mean_square(w.voltage) * mean_square(w.current);
  return std::sqrt(std::max(0.0, apparent_sq - p * p));
}

inline std::vector<double> rms_band_spectrum(const RawWindow& w, const BandSpec& bands) {
  w.validate();
  bands.validate(w.rate);
  const std::size_t N = w.current.size();
  std::vector<double> input(w.current.begin(), w.current.end());
  std::vector<std::complex<double>> spectrum;
  Eigen::FFT<double> fft;
  fft.fwd(spectrum, input);

  const double norm = 1.0 / (static_cast<double>(N) * static_cast<double>(N));
  const std::size_t last_bin = N / 2;
  std::vector<double> power(bands.count(), 0.0);
  const auto& edges = bands.edges;
  for (std::size_t k = 0; k <= last_bin; ++k) {
    const double freq = static_cast<double>(k) * w.rate / static_cast<double>(N);
    long band = static_cast<long>(std::upper_bound(edges.begin(), edges.end(), freq) - edges.begin()) - 1;
    if (band < 0) continue;
    if (band >= static_cast<long>(bands.count())) {
      // The last band is closed at its upper edge so Nyquist is included.
      if (freq > edges.back() * (1.0 + 1e-12)) continue;
      band = static_cast<long>(bands.count()) - 1;
    }
    const bool mirrored = k != 0 && !(N % 2 == 0 && k == last_bin);
    power[band] += (mirrored ? 2.0 : 1.0) * std::norm(spectrum[k]) * norm;
  }
  for (double& p : power) p = std::sqrt(p);
  return power;
}

/// Sampled voltage/current at a fixed rate.
struct RawSignal {
  double rate = 0.0;
  std::vector<Timestamp> times;
  std::vector<double> voltage;
  std::vector<double> current;

  std::size_t size() const { return times.size(); }
};

/// One feature vector per complete window of `window_seconds`; a trailing
/// partial window is dropped.
inline std::vector<FeatureVector> make_feature_stream(const RawSignal& raw, double window_seconds,
                                                      const BandSpec& bands) {
  if (!(window_seconds > 0.0)) throw ConfigError("window length must be > 0 seconds");
  if (!(raw.rate > 0.0)) throw ConfigError("sample rate must be > 0");
  if (raw.voltage.size() != raw.size() || raw.current.size() != raw.size())
    throw ConfigError("raw signal columns differ in length");
  std::vector<FeatureVector> out;
  if (raw.size() == 0) return out;
  bands.validate(raw.rate);
  const auto len = static_cast<std::size_t>(std::llround(window_seconds * raw.rate));
  if (len < 2) throw ConfigError("window shorter than two samples");
  for (std::size_t start = 0; start + len <= raw.size(); start += len) {
    const RawWindow w{std::span(raw.voltage).subspan(start, len),
                      std::span(raw.current).subspan(start, len), raw.rate, raw.times[start]};
    FeatureVector fv;
    fv.timestamp = w.start_time;
    fv.active_power = active_power(w);
    fv.reactive_power = reactive_power(w);
    fv.band_rms = rms_band_spectrum(w, bands);
    out.push_back(std::move(fv));
  }
  return out;
}

/// Column order of a feature row: leading exogenous columns (e.g. water),
/// real and reactive power, one column per band, trailing exogenous columns
/// (e.g. HEMS sensors).
struct FeatureLayout {
  std::vector<std::string> leading;
  std::size_t band_count = 0;
  std::vector<std::string> trailing;

  std::size_t width() const { return leading.size() + 2 + band_count + trailing.size(); }
  std::size_t active_power_column() const { return leading.size(); }

  std::vector<std::string> column_names() const {
    std::vector<std::string> names = leading;
    names.emplace_back("real_power");
    names.emplace_back("reactive_power");
    for (std::size_t b = 0; b < band_count; ++b) names.push_back("rms_" + std::to_string(b));
    names.insert(names.end(), trailing.begin(), trailing.end());
    return names;
  }

  std::vector<double> row(const FeatureVector& fv) const {
    if (fv.band_rms.size() != band_count || fv.exogenous.size() != leading.size() + trailing.size())
      throw ConfigError("feature vector does not match layout");
    std::vector<double> r;
    r.reserve(width());
    r.insert(r.end(), fv.exogenous.begin(), fv.exogenous.begin() + leading.size());
    r.push_back(fv.active_power);
    r.push_back(fv.reactive_power);
    r.insert(r.end(), fv.band_rms.begin(), fv.band_rms.end());
    r.insert(r.end(), fv.exogenous.begin() + leading.size(), fv.exogenous.end());
    return r;
  }
};

/// Fills each feature's exogenous values from the frame's most recent row at
/// or before the feature time.  Features preceding the frame are dropped.
/// `leading` / `trailing` name frame columns; the returned layout describes
/// the resulting rows.
inline FeatureLayout attach_exogenous(std::vector<FeatureVector>& features, const AlignedFrame& frame,
                                      const std::vector<std::string>& leading,
                                      const std::vector<std::string>& trailing,
                                      std::size_t band_count) {
  std::vector<std::size_t> cols;
  for (const auto* group : {&leading, &trailing})
    for (const auto& name : *group) {
      const long idx = frame.column_index(name);
      if (idx < 0) throw ConfigError("aligned frame has no column '" + name + "'");
      cols.push_back(static_cast<std::size_t>(idx));
    }
  std::vector<FeatureVector> kept;
  kept.reserve(features.size());
  for (auto& fv : features) {
    const long r = row_at_or_before(frame, fv.timestamp);
    if (r < 0) continue;
    fv.exogenous.clear();
    for (std::size_t c : cols) fv.exogenous.push_back(frame.at(static_cast<std::size_t>(r), c));
    kept.push_back(std::move(fv));
  }
  features = std::move(kept);
  return {leading, band_count, trailing};
}

inline Table feature_table(const std::vector<FeatureVector>& features, const FeatureLayout& layout) {
  Table t;
  t.columns = layout.column_names();
  for (const auto& fv : features) t.append(fv.timestamp, layout.row(fv));
  return t;
}

/// Groups consecutive rows of a table into windows of n rows; a trailing
/// partial window is dropped.  `row_seconds` is the duration one row covers.
inline std::vector<PatternWindow> windows_from_table(const Table& table, std::size_t n,
                                                     double row_seconds) {
  if (n < 1) throw ConfigError("pattern window length n must be >= 1");
  std::vector<PatternWindow> out;
  const std::size_t F = table.width();
  for (std::size_t start = 0; start + n <= table.rows(); start += n) {
    PatternWindow w;
    w.observations.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(F));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < F; ++c) w.observations(i, c) = table.at(start + i, c);
    w.start_time = table.times[start];
    w.span = static_cast<double>(n) * row_seconds;
    out.push_back(std::move(w));
  }
  return out;
}

inline std::vector<PatternWindow> assemble_pattern_windows(const std::vector<FeatureVector>& features,
                                                           std::size_t n, const FeatureLayout& layout,
                                                           double feature_seconds) {
  return windows_from_table(feature_table(features, layout), n, feature_seconds);
}

}  // namespace glda
