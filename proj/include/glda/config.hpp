#pragma once

// Flat key = value run configuration.
//
// One key per line, `#` starts a comment, blank lines are ignored.  Unknown
// keys are rejected.  Model keys follow the training loop's input names:
// R (raw window seconds), n (feature rows per pattern window), D, K, T
// (iterations), m, omega, s, v, alpha, kappa, tau0.  Lists are comma
// separated.  Zero / empty values of F, D, alpha, v, m and omega mean
// "derive": F from the data, D from the corpus size, alpha = 1/K, v = F + 2,
// m = 0 and omega = I.

#include "common.hpp"
#include "csv.hpp"
#include "features.hpp"
#include "inference.hpp"
#include "niw.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace glda {

struct RunConfig {
  // model
  int K = 3;
  int F = 0;
  double alpha = 0.0;
  std::vector<double> m;
  std::vector<double> omega;
  double s = 1.0;
  double v = 0.0;
  long D = 0;
  // schedule and loop
  double kappa = 0.9;
  double tau0 = 1024.0;
  int batch_size = 4;
  long T = 100;
  std::uint64_t seed = 0;
  std::string init = "data";
  double local_tol = 1e-4;
  int local_max_iter = 100;
  long log_every = 1;
  // features and windows
  double R = 1.0;
  long n = 60;
  double sample_rate = 2000.0;
  std::vector<double> bands;
  int band_count = 8;
  std::vector<std::string> leading_columns;
  std::vector<std::string> trailing_columns;
  // evaluation
  std::string energy_column = "real_power";
  double map_train_fraction = 0.5;
  std::vector<double> sweep_kappa;
  std::vector<double> sweep_tau0;
  std::vector<double> sweep_batch_size;
  long sweep_sample_budget = 0;
  // simulation
  std::string sim_mode = "corpus";
  long sim_docs = 200;
  long sim_heldout_docs = 50;
  std::vector<double> sim_means;
  double sim_seconds = 600.0;
  double mains_hz = 50.0;
  // paths
  std::string data;
  std::string heldout;
  std::string model;
  std::string out;
  std::string raw;
  std::string frame;
  std::vector<std::string> streams;  // name=path
  std::vector<std::string> shifts;   // name=seconds

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T value{};
  if (!(is >> value) || !(is >> std::ws).eof())
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

template <>
inline double parse_number<double>(const std::string& key, const std::string& text) {
  double value = 0.0;
  if (!parse_double(text, value)) throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

inline std::string join(const std::vector<double>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + format_double(items[i]);
  return out;
}

struct KeyBinding {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
KeyBinding bind_key(std::string key, T RunConfig::*field) {
  KeyBinding b;
  b.key = key;
  b.set = [key, field](RunConfig& c, const std::string& text) {
    if constexpr (std::is_same_v<T, std::string>) {
      c.*field = text;
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      std::vector<double> values;
      for (const auto& item : split_list(text)) values.push_back(parse_number<double>(key, item));
      c.*field = values;
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      c.*field = split_list(text);
    } else {
      c.*field = parse_number<T>(key, text);
    }
  };
  b.get = [field](const RunConfig& c) -> std::string {
    if constexpr (std::is_same_v<T, std::string>) {
      return c.*field;
    } else if constexpr (std::is_same_v<T, std::vector<double>> ||
                         std::is_same_v<T, std::vector<std::string>>) {
      return join(c.*field);
    } else if constexpr (std::is_same_v<T, double>) {
      return format_double(c.*field);
    } else {
      return std::to_string(c.*field);
    }
  };
  return b;
}

inline const std::vector<KeyBinding>& key_bindings() {
  static const std::vector<KeyBinding> bindings = {
      bind_key("K", &RunConfig::K),
      bind_key("F", &RunConfig::F),
      bind_key("alpha", &RunConfig::alpha),
      bind_key("m", &RunConfig::m),
      bind_key("omega", &RunConfig::omega),
      bind_key("s", &RunConfig::s),
      bind_key("v", &RunConfig::v),
      bind_key("D", &RunConfig::D),
      bind_key("kappa", &RunConfig::kappa),
      bind_key("tau0", &RunConfig::tau0),
      bind_key("batch_size", &RunConfig::batch_size),
      bind_key("T", &RunConfig::T),
      bind_key("seed", &RunConfig::seed),
      bind_key("init", &RunConfig::init),
      bind_key("local_tol", &RunConfig::local_tol),
      bind_key("local_max_iter", &RunConfig::local_max_iter),
      bind_key("log_every", &RunConfig::log_every),
      bind_key("R", &RunConfig::R),
      bind_key("n", &RunConfig::n),
      bind_key("sample_rate", &RunConfig::sample_rate),
      bind_key("bands", &RunConfig::bands),
      bind_key("band_count", &RunConfig::band_count),
      bind_key("leading_columns", &RunConfig::leading_columns),
      bind_key("trailing_columns", &RunConfig::trailing_columns),
      bind_key("energy_column", &RunConfig::energy_column),
      bind_key("map_train_fraction", &RunConfig::map_train_fraction),
      bind_key("sweep_kappa", &RunConfig::sweep_kappa),
      bind_key("sweep_tau0", &RunConfig::sweep_tau0),
      bind_key("sweep_batch_size", &RunConfig::sweep_batch_size),
      bind_key("sweep_sample_budget", &RunConfig::sweep_sample_budget),
      bind_key("sim_mode", &RunConfig::sim_mode),
      bind_key("sim_docs", &RunConfig::sim_docs),
      bind_key("sim_heldout_docs", &RunConfig::sim_heldout_docs),
      bind_key("sim_means", &RunConfig::sim_means),
      bind_key("sim_seconds", &RunConfig::sim_seconds),
      bind_key("mains_hz", &RunConfig::mains_hz),
      bind_key("data", &RunConfig::data),
      bind_key("heldout", &RunConfig::heldout),
      bind_key("model", &RunConfig::model),
      bind_key("out", &RunConfig::out),
      bind_key("raw", &RunConfig::raw),
      bind_key("frame", &RunConfig::frame),
      bind_key("streams", &RunConfig::streams),
      bind_key("shifts", &RunConfig::shifts),
  };
  return bindings;
}

}  // namespace detail

/// Sets one key from its textual value; throws ConfigError on unknown keys.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& b : detail::key_bindings())
    if (b.key == key) return b.set(c, detail::trim(value));
  throw ConfigError("unknown config key '" + key + "'");
}

/// Applies a `key=value` assignment.
inline void apply_assignment(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set_config_value(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline void parse_config(std::istream& is, RunConfig& c, const std::string& source = "config") {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    try {
      apply_assignment(c, line);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  RunConfig c;
  parse_config(is, c, path);
  return c;
}

inline std::string serialize_config(const RunConfig& c) {
  std::string out;
  for (const auto& b : detail::key_bindings()) out += b.key + " = " + b.get(c) + "\n";
  return out;
}

/// Resolves derived values and validates the model part against feature
/// dimension F.
inline ModelConfig model_config(const RunConfig& rc, int F, long D) {
  if (rc.F != 0 && rc.F != F)
    throw ConfigError("config F = " + std::to_string(rc.F) + " but data has " + std::to_string(F) +
                      " features");
  ModelConfig c;
  c.K = rc.K;
  c.F = F;
  if (c.K < 1) throw ConfigError("K must be a positive integer (got " + std::to_string(rc.K) + ")");
  c.alpha = rc.alpha > 0.0 ? rc.alpha : 1.0 / rc.K;
  if (rc.alpha < 0.0) throw ConfigError("alpha must be > 0");
  if (rc.m.empty()) {
    c.prior_m = Vector::Zero(F);
  } else {
    if (static_cast<int>(rc.m.size()) != F)
      throw ConfigError("m has " + std::to_string(rc.m.size()) + " entries, expected F = " + std::to_string(F));
    c.prior_m = Eigen::Map<const Vector>(rc.m.data(), F);
  }
  if (rc.omega.empty()) {
    c.prior_omega = Matrix::Identity(F, F);
  } else {
    if (static_cast<int>(rc.omega.size()) != F * F)
      throw ConfigError("omega has " + std::to_string(rc.omega.size()) + " entries, expected F*F = " +
                        std::to_string(F * F));
    c.prior_omega = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        rc.omega.data(), F, F);
  }
  c.prior_s = rc.s;
  c.prior_v = rc.v > 0.0 ? rc.v : F + 2.0;
  c.corpus_size_D = rc.D > 0 ? rc.D : D;
  c.validate();
  return c;
}

inline LearningSchedule learning_schedule(const RunConfig& rc) {
  LearningSchedule s{rc.kappa, rc.tau0};
  s.validate();
  return s;
}

inline LocalOptions local_options(const RunConfig& rc) {
  if (!(rc.local_tol > 0.0)) throw ConfigError("local_tol must be > 0");
  if (rc.local_max_iter < 1) throw ConfigError("local_max_iter must be >= 1");
  LocalOptions o;
  o.tol = rc.local_tol;
  o.max_iter = rc.local_max_iter;
  return o;
}

inline InitMethod init_method(const RunConfig& rc) {
  if (rc.init == "data") return InitMethod::data;
  if (rc.init == "prior") return InitMethod::prior;
  throw ConfigError("init must be 'data' or 'prior' (got '" + rc.init + "')");
}

inline BandSpec band_spec(const RunConfig& rc) {
  if (!(rc.sample_rate > 0.0)) throw ConfigError("sample_rate must be > 0");
  BandSpec spec;
  if (rc.bands.empty()) {
    if (rc.band_count < 1) throw ConfigError("band_count must be >= 1");
    spec = BandSpec::log_default(rc.sample_rate, rc.band_count);
  } else {
    spec.edges = rc.bands;
  }
  spec.validate(rc.sample_rate);
  return spec;
}

/// Splits `name=value` list entries.
inline std::vector<std::pair<std::string, std::string>> named_entries(const std::vector<std::string>& items,
                                                                      const std::string& key) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("config key '" + key + "': expected name=value, got '" + item + "'");
    out.emplace_back(detail::trim(item.substr(0, eq)), detail::trim(item.substr(eq + 1)));
  }
  return out;
}

}  // namespace glda
