#pragma once

// Command-line front end: simulate | preprocess | extract | train | eval | map | sweep.
//
// Configuration precedence, lowest first: built-in defaults, --config file,
// --set key=value and the path flags, --seed.  Logs go to the error stream,
// results to the output stream or to files.
//
// Exit codes: 0 ok, 1 configuration/validation, 2 I/O, 3 numerical failure.

#include "align.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "evaluation.hpp"
#include "features.hpp"
#include "inference.hpp"
#include "synthetic_signal.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace glda::cli {

enum ExitCode : int { kOk = 0, kConfig = 1, kIo = 2, kNumerical = 3 };

struct Context {
  RunConfig cfg;
  bool verbose = false;
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

inline std::string require_path(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError("missing required path '" + key + "'");
  return value;
}

inline std::ofstream open_output(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
    if (ec) throw IoError("cannot create directory '" + parent.string() + "': " + ec.message());
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

inline void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory '" + dir + "'" + (ec ? ": " + ec.message() : ""));
}

inline void write_file(const std::string& path, const Table& t) {
  auto os = open_output(path);
  write_table(os, t);
  if (!os) throw IoError("failed writing '" + path + "'");
}

struct Windows {
  Table table;
  std::vector<PatternWindow> docs;
};

inline Windows load_windows(const RunConfig& rc, const std::string& path) {
  if (rc.n < 1) throw ConfigError("n must be >= 1");
  if (!(rc.R > 0.0)) throw ConfigError("R must be > 0");
  Windows w;
  w.table = read_table_file(path);
  if (w.table.width() == 0) throw IoError(path + ": no feature columns");
  w.docs = windows_from_table(w.table, static_cast<std::size_t>(rc.n), rc.R);
  return w;
}

inline void check_dimensions(const ModelConfig& model, const Table& data, const std::string& path) {
  if (static_cast<int>(data.width()) != model.F)
    throw ConfigError("model has F = " + std::to_string(model.F) + " features but '" + path + "' has " +
                      std::to_string(data.width()));
}

inline Table corpus_table(const SyntheticCorpus& corpus, int F) {
  Table t;
  for (int f = 0; f < F; ++f) t.columns.push_back("x" + std::to_string(f));
  std::vector<double> row(F);
  for (const auto& doc : corpus.docs)
    for (Eigen::Index i = 0; i < doc.size(); ++i) {
      for (int f = 0; f < F; ++f) row[f] = doc.observations(i, f);
      t.append(Timestamp{doc.start_time.ns + i * Timestamp::kPerSecond}, row);
    }
  return t;
}

inline std::uint64_t heldout_seed(std::uint64_t seed) { return seed ^ 0xd1b54a32d192ed03ULL; }

}  // namespace detail

inline int cmd_simulate(Context& ctx) {
  const RunConfig& rc = ctx.cfg;
  const std::string dir = detail::require_path(rc.out, "out");
  if (rc.sim_mode == "raw") {
    const auto h = simulate_household(rc.sim_seconds, rc.sample_rate, rc.mains_hz, rc.seed);
    detail::ensure_directory(dir);
    detail::write_file(dir + "/raw.csv", raw_signal_table(h.raw));
    detail::write_file(dir + "/water.csv", h.water.data);
    detail::write_file(dir + "/temperature.csv", h.temperature.data);
    detail::write_file(dir + "/schedule.csv", h.schedule);
    ctx.err << "simulate: " << h.raw.size() << " raw samples written to " << dir << '\n';
    return kOk;
  }
  if (rc.sim_mode != "corpus") throw ConfigError("sim_mode must be 'corpus' or 'raw'");
  if (rc.F < 1) throw ConfigError("F must be set to a positive integer for simulate (got " +
                                  std::to_string(rc.F) + ")");
  if (rc.sim_docs < 1 || rc.sim_heldout_docs < 1) throw ConfigError("sim_docs and sim_heldout_docs must be >= 1");
  if (rc.n < 1) throw ConfigError("n must be >= 1");
  const ModelConfig model = model_config(rc, rc.F, rc.sim_docs);
  std::vector<GaussianComponent> planted;
  if (!rc.sim_means.empty()) {
    if (static_cast<long>(rc.sim_means.size()) != static_cast<long>(model.K) * model.F)
      throw ConfigError("sim_means needs K*F = " + std::to_string(model.K * model.F) + " values");
    for (int k = 0; k < model.K; ++k)
      planted.push_back({Eigen::Map<const Vector>(rc.sim_means.data() + k * model.F, model.F),
                         Matrix::Identity(model.F, model.F)});
  }
  const auto* fixed = planted.empty() ? nullptr : &planted;
  const auto train = sample_corpus(model, rc.sim_docs, rc.n, rc.seed, fixed);
  // Held-out windows reuse the training components.
  const auto heldout = sample_corpus(model, rc.sim_heldout_docs, rc.n, detail::heldout_seed(rc.seed),
                                     &train.true_components);
  detail::ensure_directory(dir);
  detail::write_file(dir + "/train.csv", detail::corpus_table(train, model.F));
  detail::write_file(dir + "/heldout.csv", detail::corpus_table(heldout, model.F));

  Table theta;
  for (int k = 0; k < model.K; ++k) theta.columns.push_back("c" + std::to_string(k));
  for (long d = 0; d < rc.sim_docs; ++d) {
    const Vector row = train.true_theta.row(d).transpose();
    theta.append(train.docs[d].start_time, std::span<const double>(row.data(), row.size()));
  }
  detail::write_file(dir + "/theta.csv", theta);

  auto os = detail::open_output(dir + "/components.txt");
  for (int k = 0; k < model.K; ++k) {
    const auto& c = train.true_components[k];
    os << "component " << k << "\nmean";
    for (int f = 0; f < model.F; ++f) os << ' ' << format_double(c.mean[f]);
    os << "\ncovariance";
    for (int i = 0; i < model.F; ++i)
      for (int j = 0; j < model.F; ++j) os << ' ' << format_double(c.covariance(i, j));
    os << '\n';
  }
  if (!os) throw IoError("failed writing components");
  ctx.err << "simulate: " << rc.sim_docs << " training and " << rc.sim_heldout_docs
          << " held-out windows written to " << dir << '\n';
  return kOk;
}

inline int cmd_preprocess(Context& ctx) {
  const RunConfig& rc = ctx.cfg;
  const std::string out = detail::require_path(rc.out, "out");
  const auto entries = named_entries(rc.streams, "streams");
  if (entries.empty()) throw ConfigError("preprocess needs at least one entry in 'streams' (name=path)");
  std::map<std::string, double> shifts;
  for (const auto& [name, value] : named_entries(rc.shifts, "shifts")) {
    double shift = 0.0;
    if (!parse_double(value, shift)) throw ConfigError("shift for '" + name + "' is not a number");
    shifts[name] = shift;
  }
  std::vector<TimedSeries> series;
  for (const auto& [name, path] : entries) {
    TimedSeries s = read_series_csv(path, name);
    if (s.size() == 0) throw ConfigError("stream '" + name + "' (" + path + ") has no samples");
    if (const auto it = shifts.find(name); it != shifts.end()) s = synchronize(s, it->second);
    series.push_back(std::move(s));
  }
  for (const auto& [name, _] : shifts)
    if (std::none_of(entries.begin(), entries.end(), [&](const auto& e) { return e.first == name; }))
      throw ConfigError("shift given for unknown stream '" + name + "'");
  const AlignedFrame frame = align(series);
  detail::write_file(out, frame);
  ctx.err << "preprocess: aligned " << series.size() << " streams into " << frame.rows() << " rows\n";
  return kOk;
}

inline int cmd_extract(Context& ctx) {
  const RunConfig& rc = ctx.cfg;
  const std::string raw_path = detail::require_path(rc.raw, "raw");
  const std::string out = detail::require_path(rc.out, "out");
  const BandSpec bands = band_spec(rc);
  if (!(rc.R > 0.0)) throw ConfigError("R must be > 0");
  const RawSignal raw = raw_signal_from_table(read_table_file(raw_path, {"voltage", "current"}), rc.sample_rate);
  auto features = make_feature_stream(raw, rc.R, bands);
  FeatureLayout layout{{}, bands.count(), {}};
  if (!rc.frame.empty()) {
    const AlignedFrame frame = read_frame_csv(rc.frame);
    std::vector<std::string> leading = rc.leading_columns;
    std::vector<std::string> trailing = rc.trailing_columns;
    if (leading.empty() && trailing.empty()) {
      for (const auto& c : frame.columns) (c == "water" ? leading : trailing).push_back(c);
    }
    layout = attach_exogenous(features, frame, leading, trailing, bands.count());
  }
  detail::write_file(out, feature_table(features, layout));
  ctx.err << "extract: " << features.size() << " feature vectors of width " << layout.width() << '\n';
  return kOk;
}

inline int cmd_train(Context& ctx) {
  const RunConfig& rc = ctx.cfg;
  const std::string data = detail::require_path(rc.data, "data");
  const std::string model_path = detail::require_path(rc.model, "model");
  if (rc.T < 0) throw ConfigError("T must be >= 0");
  if (rc.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (rc.log_every < 1) throw ConfigError("log_every must be >= 1");
  const auto windows = detail::load_windows(rc, data);
  if (windows.docs.empty())
    throw ConfigError("'" + data + "' holds fewer than n = " + std::to_string(rc.n) + " rows");
  const ModelConfig model = model_config(rc, static_cast<int>(windows.table.width()),
                                         static_cast<long>(windows.docs.size()));
  TrainOptions opts;
  opts.init = init_method(rc);
  opts.batch_size = rc.batch_size;
  opts.iters = rc.T;
  opts.seed = rc.seed;
  opts.local = local_options(rc);
  opts.observer = [&](const IterationReport& r) {
    if (r.t % rc.log_every != 0 && r.t + 1 != rc.T) return;
    ctx.err << "iter " << r.t << " rho " << format_double(r.rho) << " batch " << r.batch_id << " docs";
    for (auto d : r.doc_ids) ctx.err << ' ' << d;
    ctx.err << " elbo " << format_double(r.elbo_estimate) << '\n';
  };
  const GlobalState state = fit_online(windows.docs, model, learning_schedule(rc), opts);
  auto os = detail::open_output(model_path);
  write_checkpoint(os, model, state);
  if (!os) throw IoError("failed writing '" + model_path + "'");
  ctx.err << "train: " << rc.T << " iterations over " << windows.docs.size() << " windows, checkpoint "
          << model_path << '\n';
  return kOk;
}

inline int cmd_eval(Context& ctx) {
  const RunConfig& rc = ctx.cfg;
  const Checkpoint cp = load_checkpoint(detail::require_path(rc.model, "model"));
  const std::string heldout = detail::require_path(rc.heldout.empty() ? rc.data : rc.heldout, "heldout");
  const auto windows = detail::load_windows(rc, heldout);
  detail::check_dimensions(cp.config, windows.table, heldout);
  if (windows.docs.empty()) throw ConfigError("held-out set has no complete window");
  const double p = perplexity(windows.docs, cp.state, cp.config, local_options(rc));
  ctx.out << format_double(p) << '\n';
  return kOk;
}

inline void write_energy_report(std::ostream& os, const EnergyMap& map, std::size_t train_windows,
                                const std::vector<Timestamp>& times, const Vector& computed,
                                const Vector& estimated) {
  os << "# per-component energy (J)\n";
  for (Eigen::Index k = 0; k < map.w.size(); ++k) os << "w" << k << ' ' << format_double(map.w[k]) << '\n';
  os << "residual_norm " << format_double(map.residual_norm) << '\n';
  os << "train_windows " << train_windows << '\n';
  os << "# time computed_J estimated_J\n";
  for (Eigen::Index t = 0; t < computed.size(); ++t)
    os << format_seconds(times[t]) << ' ' << format_double(computed[t]) << ' ' << format_double(estimated[t])
       << '\n';
}

inline int cmd_map(Context& ctx) {
  const RunConfig& rc = ctx.cfg;
  const Checkpoint cp = load_checkpoint(detail::require_path(rc.model, "model"));
  const std::string data = detail::require_path(rc.data, "data");
  const std::string out = detail::require_path(rc.out, "out");
  const auto windows = detail::load_windows(rc, data);
  detail::check_dimensions(cp.config, windows.table, data);
  if (windows.docs.empty()) throw ConfigError("'" + data + "' has no complete window");
  const long power = windows.table.column_index(rc.energy_column);
  if (power < 0) throw ConfigError("energy_column '" + rc.energy_column + "' not found in '" + data + "'");
  if (!(rc.map_train_fraction > 0.0 && rc.map_train_fraction <= 1.0))
    throw ConfigError("map_train_fraction must lie in (0, 1]");

  const PatternMatrix pm = pattern_matrix(windows.docs, cp.state, cp.config.alpha, local_options(rc));
  {
    auto os = detail::open_output(out + ".pgm");
    write_pgm(os, pm.values);
    if (!os) throw IoError("failed writing image");
  }
  {
    auto os = detail::open_output(out + "_proportions.csv");
    write_proportions_csv(os, pm);
    if (!os) throw IoError("failed writing proportions");
  }
  const Matrix A = pm.values.transpose();
  const Vector b = per_pattern_energy(windows.docs, power, rc.R);
  const auto T = static_cast<Eigen::Index>(windows.docs.size());
  const Eigen::Index train = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(rc.map_train_fraction * T));
  const EnergyMap map = fit_energy_map(A.topRows(train), b.head(train));
  const Vector estimated = predict_energy(A, map);
  {
    auto os = detail::open_output(out + "_energy.txt");
    write_energy_report(os, map, static_cast<std::size_t>(train), pm.window_times, b, estimated);
    if (!os) throw IoError("failed writing energy report");
  }
  ctx.out << out << ".pgm\n" << out << "_proportions.csv\n" << out << "_energy.txt\n";
  return kOk;
}

inline int cmd_sweep(Context& ctx) {
  const RunConfig& rc = ctx.cfg;
  const std::string data = detail::require_path(rc.data, "data");
  const std::string heldout = detail::require_path(rc.heldout, "heldout");
  const auto train = detail::load_windows(rc, data);
  const auto test = detail::load_windows(rc, heldout);
  if (train.docs.empty() || test.docs.empty()) throw ConfigError("sweep needs complete windows in data and heldout");
  const ModelConfig model = model_config(rc, static_cast<int>(train.table.width()),
                                         static_cast<long>(train.docs.size()));
  detail::check_dimensions(model, test.table, heldout);
  const auto kappas = rc.sweep_kappa.empty() ? std::vector<double>{rc.kappa} : rc.sweep_kappa;
  const auto taus = rc.sweep_tau0.empty() ? std::vector<double>{rc.tau0} : rc.sweep_tau0;
  const auto sizes = rc.sweep_batch_size.empty() ? std::vector<double>{double(rc.batch_size)} : rc.sweep_batch_size;

  std::ostringstream csv;
  csv << "kappa,tau0,batch_size,perplexity\n";
  for (double kappa : kappas)
    for (double tau0 : taus)
      for (double bs : sizes) {
        if (bs < 1 || bs != std::floor(bs)) throw ConfigError("sweep_batch_size entries must be positive integers");
        const LearningSchedule schedule{kappa, tau0};
        schedule.validate();
        TrainOptions opts;
        opts.init = init_method(rc);
        opts.batch_size = static_cast<int>(bs);
        opts.iters = rc.sweep_sample_budget > 0 ? rc.sweep_sample_budget / opts.batch_size : rc.T;
        opts.seed = rc.seed;
        opts.local = local_options(rc);
        const GlobalState state = fit_online(train.docs, model, schedule, opts);
        const double p = perplexity(test.docs, state, model, opts.local);
        csv << format_double(kappa) << ',' << format_double(tau0) << ',' << opts.batch_size << ','
            << format_double(p) << '\n';
        if (ctx.verbose)
          ctx.err << "sweep: kappa " << kappa << " tau0 " << tau0 << " bs " << bs << " perplexity " << p << '\n';
      }
  if (rc.out.empty()) {
    ctx.out << csv.str();
  } else {
    auto os = detail::open_output(rc.out);
    os << csv.str();
    if (!os) throw IoError("failed writing '" + rc.out + "'");
  }
  return kOk;
}

/// Entry point shared by the executable and the tests.  `args` excludes argv[0].
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Online Gaussian LDA pattern mining for utility usage data", "glda"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  std::vector<std::string> assignments;
  std::string data, heldout, model, output, raw, frame;
  app.add_option("--config", config_path, "Key=value configuration file");
  app.add_option("--seed", seed, "Random seed (overrides the config)");
  app.add_flag("--verbose", verbose, "Extra progress output on stderr");
  app.add_option("--set", assignments, "Override a config key: --set key=value")->take_all();
  app.add_option("--data", data, "Feature/corpus CSV");
  app.add_option("--heldout", heldout, "Held-out CSV");
  app.add_option("--model", model, "Model checkpoint path");
  app.add_option("--out", output, "Output path (file, directory or prefix by command)");
  app.add_option("--raw", raw, "Raw timestamp,voltage,current CSV");
  app.add_option("--frame", frame, "Aligned frame CSV");

  using Command = int (*)(Context&);
  const std::vector<std::pair<std::string, std::pair<std::string, Command>>> commands = {
      {"simulate", {"Write a synthetic corpus (sim_mode=corpus) or raw household signal (sim_mode=raw)", cmd_simulate}},
      {"preprocess", {"Synchronize and align the streams listed in 'streams'", cmd_preprocess}},
      {"extract", {"Raw signal (+ aligned frame) to feature CSV", cmd_extract}},
      {"train", {"Fit the model online and write a checkpoint", cmd_train}},
      {"eval", {"Print held-out perplexity", cmd_eval}},
      {"map", {"Pattern image, proportions and energy map", cmd_map}},
      {"sweep", {"Perplexity over a (kappa, tau0, batch size) grid", cmd_sweep}},
  };
  for (const auto& [name, info] : commands) app.add_subcommand(name, info.first);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  }

  try {
    Context ctx{{}, verbose, out, err};
    if (!config_path.empty()) ctx.cfg = load_config(config_path);
    for (const auto& a : assignments) apply_assignment(ctx.cfg, a);
    const std::pair<std::string*, const std::string*> paths[] = {
        {&ctx.cfg.data, &data}, {&ctx.cfg.heldout, &heldout}, {&ctx.cfg.model, &model},
        {&ctx.cfg.out, &output}, {&ctx.cfg.raw, &raw},       {&ctx.cfg.frame, &frame}};
    for (const auto& [field, flag] : paths)
      if (!flag->empty()) *field = *flag;
    if (seed) ctx.cfg.seed = *seed;
    if (verbose) err << "config:\n" << serialize_config(ctx.cfg);
    for (const auto& [name, info] : commands)
      if (app.got_subcommand(name)) return info.second(ctx);
    return kConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::domain_error& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  }
}

}  // namespace glda::cli
