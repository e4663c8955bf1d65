#pragma once

// Synthetic household signal: mains voltage and an aggregate current drawn by
// a few planted appliances switching on and off, plus slow water-flow and
// room-temperature streams.  Used to exercise the preprocessing path end to end.

#include "common.hpp"
#include "csv.hpp"
#include "features.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace glda {

struct PlantedAppliance {
  std::string name;
  double watts;
  double phase;  // current lag behind voltage, radians
  double third_harmonic;  // amplitude relative to the fundamental
  double p_on;   // per-second switch-on probability
  double p_off;  // per-second switch-off probability
};

inline std::vector<PlantedAppliance> default_appliances() {
  return {
      {"kettle", 2000.0, 0.0, 0.0, 0.01, 0.2},
      {"fridge", 150.0, 0.7, 0.05, 0.05, 0.05},
      {"television", 120.0, 0.2, 0.6, 0.02, 0.01},
  };
}

struct SyntheticHousehold {
  RawSignal raw;
  TimedSeries water;        // litres per minute every 10 s
  TimedSeries temperature;  // degrees C every 60 s
  Table schedule;           // one row per second, one 0/1 column per appliance
};

inline SyntheticHousehold simulate_household(double seconds, double rate, double mains_hz,
                                             std::uint64_t seed,
                                             const std::vector<PlantedAppliance>& appliances = default_appliances(),
                                             Timestamp start = Timestamp{1'495'000'000LL * Timestamp::kPerSecond}) {
  if (!(seconds >= 1.0)) throw ConfigError("simulation must cover at least one second");
  if (!(rate > 4.0 * mains_hz)) throw ConfigError("sample_rate must exceed four times mains_hz");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const auto whole_seconds = static_cast<long>(std::floor(seconds));
  SyntheticHousehold h;
  for (const auto& a : appliances) h.schedule.columns.push_back(a.name);
  std::vector<double> on(appliances.size(), 0.0);
  for (long sec = 0; sec < whole_seconds; ++sec) {
    for (std::size_t a = 0; a < appliances.size(); ++a) {
      const double u = unit(rng);
      if (on[a] == 0.0 && u < appliances[a].p_on) on[a] = 1.0;
      else if (on[a] == 1.0 && u < appliances[a].p_off) on[a] = 0.0;
    }
    h.schedule.append(Timestamp{start.ns + sec * Timestamp::kPerSecond}, on);
  }

  const double vrms = 230.0;
  const double vpk = vrms * std::numbers::sqrt2;
  const double w0 = 2.0 * std::numbers::pi * mains_hz;
  const auto total = static_cast<std::size_t>(std::llround(static_cast<double>(whole_seconds) * rate));
  h.raw.rate = rate;
  h.raw.times.reserve(total);
  h.raw.voltage.reserve(total);
  h.raw.current.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const double t = static_cast<double>(i) / rate;
    const auto sec = static_cast<std::size_t>(t);
    double current = 0.005 * noise(rng);
    for (std::size_t a = 0; a < appliances.size(); ++a) {
      if (h.schedule.at(sec, a) == 0.0) continue;
      const auto& app = appliances[a];
      const double ipk = app.watts / (vrms * std::cos(app.phase)) * std::numbers::sqrt2;
      current += ipk * (std::cos(w0 * t - app.phase) + app.third_harmonic * std::cos(3.0 * w0 * t));
    }
    h.raw.times.push_back(Timestamp{start.ns + static_cast<std::int64_t>(std::llround(t * Timestamp::kPerSecond))});
    h.raw.voltage.push_back(vpk * std::cos(w0 * t));
    h.raw.current.push_back(current);
  }

  h.water.name = "water";
  h.water.data.columns = {"value"};
  for (long sec = 0; sec < whole_seconds; sec += 10) {
    // Hot-water draw follows the first appliance (kettle) with some noise.
    const double flow = std::max(0.0, 2.0 * h.schedule.at(sec, 0) + 0.1 * noise(rng));
    const double row[] = {flow};
    h.water.data.append(Timestamp{start.ns + sec * Timestamp::kPerSecond}, row);
  }
  h.temperature.name = "temperature";
  h.temperature.data.columns = {"value"};
  for (long sec = 0; sec < whole_seconds; sec += 60) {
    const double row[] = {20.0 + 2.0 * std::sin(2.0 * std::numbers::pi * sec / 86400.0) + 0.1 * noise(rng)};
    h.temperature.data.append(Timestamp{start.ns + sec * Timestamp::kPerSecond}, row);
  }
  return h;
}

inline Table raw_signal_table(const RawSignal& raw) {
  Table t;
  t.columns = {"voltage", "current"};
  t.times = raw.times;
  t.values.reserve(raw.size() * 2);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    t.values.push_back(raw.voltage[i]);
    t.values.push_back(raw.current[i]);
  }
  return t;
}

inline RawSignal raw_signal_from_table(const Table& t, double rate) {
  if (t.columns != std::vector<std::string>{"voltage", "current"})
    throw IoError("raw signal table must have columns timestamp,voltage,current");
  RawSignal raw;
  raw.rate = rate;
  raw.times = t.times;
  raw.voltage.reserve(t.rows());
  raw.current.reserve(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    raw.voltage.push_back(t.at(r, 0));
    raw.current.push_back(t.at(r, 1));
  }
  return raw;
}

}  // namespace glda
