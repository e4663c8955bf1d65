// Acceptance suite.  Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include "oracles.hpp"

#include <glda/glda.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

using namespace glda;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }
double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

double niw_rel(const NiwPosterior& a, const NiwPosterior& b) {
  return std::max({rel(a.qs, b.qs), rel(a.qv, b.qv), rel(a.qm, b.qm), rel(a.qomega, b.qomega)});
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(3);
  os << x;
  return os.str();
}

ModelConfig random_config(int K, int F, long D, std::mt19937_64& rng) {
  ModelConfig c = ModelConfig::defaults(K, F, D);
  std::uniform_real_distribution<double> u(0.2, 5.0);
  c.alpha = u(rng);
  c.prior_m = oracle::random_vector(F, rng, 2.0);
  c.prior_omega = oracle::random_spd(F, rng);
  c.prior_s = u(rng);
  c.prior_v = F + u(rng);
  return c;
}

GlobalState random_state(int K, int F, std::mt19937_64& rng) {
  GlobalState st;
  for (int k = 0; k < K; ++k) st.components.push_back(oracle::random_posterior(F, rng));
  st.t = static_cast<long>(rng() % 100);
  return st;
}

std::vector<PatternWindow> random_docs(long D, int F, std::mt19937_64& rng) {
  std::vector<PatternWindow> docs;
  for (long d = 0; d < D; ++d) docs.push_back(oracle::random_window(1 + static_cast<long>(rng() % 20), F, rng));
  return docs;
}

// |B| = D, rho = 1: one SVI step against the closed-form conditional update.
Outcome exact_update() {
  std::mt19937_64 rng(101);
  const int K = 4, F = 3;
  const long D = 8;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const ModelConfig c = random_config(K, F, D, rng);
    const GlobalState st = random_state(K, F, rng);
    const auto docs = random_docs(D, F, rng);
    LocalOptions lo;
    const GlobalState next = svi_step(st, docs, c, 1.0, lo);

    std::vector<LocalState> locals;
    for (const auto& doc : docs) locals.push_back(local_step(doc, st, c.alpha, lo));
    for (int k = 0; k < K; ++k) {
      double N = 0.0;
      Vector sx = Vector::Zero(F);
      Matrix sxx = Matrix::Zero(F, F);
      for (long d = 0; d < D; ++d)
        for (Eigen::Index i = 0; i < docs[d].size(); ++i) {
          const double p = locals[d].phi(i, k);
          const Vector x = docs[d].observations.row(i).transpose();
          N += p;
          sx += p * x;
          sxx += p * x * x.transpose();
        }
      NiwPosterior want;
      want.qs = c.prior_s + N;
      want.qv = c.prior_v + N;
      want.qm = (c.prior_s * c.prior_m + sx) / want.qs;
      want.qomega = c.prior_omega + sxx + c.prior_s * c.prior_m * c.prior_m.transpose() -
                    want.qs * want.qm * want.qm.transpose();
      worst = std::max(worst, niw_rel(next.components[k], want));
    }
  }
  return {worst <= 1e-10, "max relative error " + fmt(worst)};
}

// global_step against the four mean-space interpolation formulas written out
// term by term.
Outcome mean_space_equivalence() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int K = 1 + static_cast<int>(rng() % 4);
    const int F = 1 + static_cast<int>(rng() % 4);
    const long B = 1 + static_cast<long>(rng() % 6);
    const long D = B + static_cast<long>(rng() % 50);
    const ModelConfig c = random_config(K, F, D, rng);
    const GlobalState st = random_state(K, F, rng);
    const auto docs = random_docs(B, F, rng);
    const double rho = std::max(1e-3, unit(rng));

    std::vector<LocalState> locals;
    for (const auto& doc : docs) {
      LocalState ls;
      ls.phi.resize(doc.size(), K);
      for (Eigen::Index i = 0; i < doc.size(); ++i)
        ls.phi.row(i) = detail::sample_dirichlet(K, 1.0, rng).transpose();
      ls.gamma = Vector::Constant(K, c.alpha) + ls.phi.colwise().sum().transpose();
      locals.push_back(std::move(ls));
    }
    const auto lambda_hat = intermediate_global(docs, locals, c);
    const GlobalState next = global_step(st, lambda_hat, rho);

    const double scale = static_cast<double>(D) / static_cast<double>(B);
    for (int k = 0; k < K; ++k) {
      double N = 0.0;
      Vector sx = Vector::Zero(F);
      Matrix sxx = Matrix::Zero(F, F);
      for (long d = 0; d < B; ++d)
        for (Eigen::Index i = 0; i < docs[d].size(); ++i) {
          const double p = locals[d].phi(i, k);
          const Vector x = docs[d].observations.row(i).transpose();
          N += scale * p;
          sx += scale * p * x;
          sxx += scale * p * x * x.transpose();
        }
      const auto& q = st.components[k];
      NiwPosterior want;
      want.qs = (1 - rho) * q.qs + rho * (c.prior_s + N);
      want.qv = (1 - rho) * q.qv + rho * (c.prior_v + N);
      want.qm = (1 - rho) * (q.qs / want.qs) * q.qm + (rho / want.qs) * (c.prior_s * c.prior_m + sx);
      want.qomega = (1 - rho) * (q.qomega + q.qs * q.qm * q.qm.transpose()) -
                    want.qs * want.qm * want.qm.transpose() +
                    rho * (c.prior_omega + c.prior_s * c.prior_m * c.prior_m.transpose() + sxx);
      worst = std::max(worst, niw_rel(next.components[k], want));
    }
  }
  return {worst <= 1e-9, "max relative error " + fmt(worst)};
}

Outcome local_monotone() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  double worst_drop = 0.0;
  long sweeps = 0;
  for (int d = 0; d < 100; ++d) {
    const int K = 2 + static_cast<int>(rng() % 5);
    const int F = 1 + static_cast<int>(rng() % 4);
    const GlobalState st = random_state(K, F, rng);
    const double alpha = u(rng);
    const auto doc = oracle::random_window(1 + static_cast<long>(rng() % 80), F, rng);
    std::vector<double> trace;
    LocalOptions lo;
    lo.tol = 1e-14;
    lo.max_iter = 60;
    lo.on_sweep = [&](const LocalState& ls) { trace.push_back(document_elbo(doc, ls, st, alpha)); };
    local_step(doc, st, alpha, lo);
    sweeps += static_cast<long>(trace.size());
    for (std::size_t s = 1; s < trace.size(); ++s)
      worst_drop = std::max(worst_drop, (trace[s - 1] - trace[s]) / std::max(1.0, std::abs(trace[s - 1])));
  }
  return {worst_drop <= 1e-8, fmt(static_cast<double>(sweeps)) + " sweeps, largest relative drop " + fmt(worst_drop)};
}

// Criteria 4 and 5 share the same fits.
struct RecoveryResult {
  Outcome recovery, perplexity_trend;
};

RecoveryResult recovery() {
  ModelConfig c = ModelConfig::defaults(3, 2, 500);
  c.alpha = 0.5;
  const std::vector<GaussianComponent> truth{{Vector::Zero(2), Matrix::Identity(2, 2)},
                                             {Eigen::Vector2d(10, 0), Matrix::Identity(2, 2)},
                                             {Eigen::Vector2d(0, 10), Matrix::Identity(2, 2)}};
  int recovered = 0, improved = 0;
  std::string errs, ratios;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto corpus = sample_corpus(c, 500, 50, seed, &truth);
    const auto held = sample_corpus(c, 100, 50, seed + 1000, &truth);
    TrainOptions o;
    o.batch_size = 4;
    o.iters = 2000;
    o.seed = seed;
    const GlobalState init = initialize_from_data(c, corpus.docs, seed);
    const GlobalState st = fit_online(corpus.docs, c, {0.9, 64.0}, o);

    std::vector<Vector> learned, target;
    for (const auto& q : st.components) learned.push_back(q.qm);
    for (const auto& g : truth) target.push_back(g.mean);
    const auto perm = match_components(learned, target);
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) worst = std::max(worst, (learned[perm[k]] - target[k]).norm());
    recovered += worst <= 0.5;
    errs += (errs.empty() ? "" : " ") + fmt(worst);

    const double ratio = perplexity(held.docs, st, c) / perplexity(held.docs, init, c);
    improved += ratio <= 0.9;
    ratios += (ratios.empty() ? "" : " ") + fmt(ratio);
  }
  return {{recovered >= 4, std::to_string(recovered) + "/5 seeds within 0.5 (worst error per seed: " + errs + ")"},
          {improved == 5, std::to_string(improved) + "/5 seeds at <= 0.9x (after/init: " + ratios + ")"}};
}

// Fixed budget of 2000 sampled documents; BS=4 takes a quarter as many steps.
Outcome batch_size_trend() {
  const int K = 5;
  ModelConfig c = ModelConfig::defaults(K, 2, 500);
  c.alpha = 0.1;
  std::vector<GaussianComponent> ring;
  for (int k = 0; k < K; ++k) {
    const double a = 2 * std::numbers::pi * k / K;
    ring.push_back({Eigen::Vector2d(10 * std::cos(a), 10 * std::sin(a)), Matrix::Identity(2, 2)});
  }
  const long budget = 2000;
  int wins = 0;
  std::string pairs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto corpus = sample_corpus(c, 500, 50, seed, &ring);
    const auto held = sample_corpus(c, 100, 50, seed + 1000, &ring);
    double p[2];
    const int sizes[2] = {1, 4};
    for (int j = 0; j < 2; ++j) {
      TrainOptions o;
      o.batch_size = sizes[j];
      o.iters = budget / sizes[j];
      o.seed = seed;
      p[j] = perplexity(held.docs, fit_online(corpus.docs, c, {0.6, 1.0}, o), c);
    }
    wins += p[1] <= p[0];
    pairs += (pairs.empty() ? "" : " ") + fmt(p[0]) + "/" + fmt(p[1]);
  }
  return {wins >= 4, std::to_string(wins) + "/5 seeds (BS=1/BS=4 perplexity: " + pairs + ")"};
}

Outcome features() {
  const double rate = 1000.0, hz = 50.0;
  const std::size_t N = 1000;
  auto sine = [&](double phase) {
    std::vector<double> x(N);
    for (std::size_t j = 0; j < N; ++j)
      x[j] = std::sqrt(2.0) * std::sin(2 * std::numbers::pi * hz * j / rate + phase);
    return x;
  };
  const auto v = sine(0.0);
  const auto i_same = sine(0.0);
  const auto i_lag = sine(-std::numbers::pi / 3);
  const double q0 = reactive_power({v, i_same, rate, {}});
  const double p1 = active_power({v, i_lag, rate, {}});
  const double q1 = reactive_power({v, i_lag, rate, {}});
  bool ok = std::abs(q0) < 1e-9 && std::abs(p1 - 0.5) <= 1e-6 && std::abs(q1 - std::sqrt(3.0) / 2) <= 1e-6;

  std::mt19937_64 rng(707);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 64 + rng() % 2000;
    std::vector<double> vv(n), ii(n);
    for (std::size_t j = 0; j < n; ++j) {
      vv[j] = normal(rng);
      ii[j] = normal(rng) + 0.5;
    }
    const auto bands = BandSpec::log_default(rate);
    double total = 0.0;
    for (double r : rms_band_spectrum({vv, ii, rate, {}}, bands)) total += r * r;
    double ms = 0.0;
    for (double x : ii) ms += x * x;
    ms /= static_cast<double>(n);
    worst = std::max(worst, std::abs(total - ms) / ms);
  }
  ok = ok && worst <= 1e-9;
  return {ok, "Q(in phase) " + fmt(q0) + ", P " + fmt(p1) + ", Q " + fmt(q1) + ", Parseval max rel error " + fmt(worst)};
}

Outcome alignment() {
  std::mt19937_64 rng(808);
  std::normal_distribution<double> normal;
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t S = 1 + rng() % 5;
    std::vector<TimedSeries> streams;
    for (std::size_t s = 0; s < S; ++s) {
      TimedSeries ts;
      ts.name = "s" + std::to_string(s);
      const std::size_t width = 1 + rng() % 2;
      for (std::size_t c = 0; c < width; ++c) ts.data.columns.push_back(width == 1 ? "value" : "c" + std::to_string(c));
      const std::size_t n = 1 + rng() % 50;
      std::vector<std::int64_t> raw;
      while (raw.size() < n) {
        raw.push_back(static_cast<std::int64_t>(rng() % 200) * 250'000'000);
        std::sort(raw.begin(), raw.end());
        raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
      }
      for (auto ns : raw) {
        std::vector<double> row(width);
        for (auto& x : row) x = normal(rng);
        ts.data.append(Timestamp{ns}, row);
      }
      streams.push_back(std::move(ts));
    }
    const AlignedFrame frame = align(streams);

    // Brute force: every distinct timestamp at which all streams have started,
    // each cell the last sample at or before it found by a linear scan.
    std::vector<std::int64_t> grid;
    for (const auto& s : streams)
      for (const auto& t : s.data.times) {
        bool all_started = true;
        for (const auto& o : streams) all_started = all_started && o.data.times.front() <= t;
        if (all_started && std::find(grid.begin(), grid.end(), t.ns) == grid.end()) grid.push_back(t.ns);
      }
    std::sort(grid.begin(), grid.end());
    bool same = frame.rows() == grid.size();
    for (std::size_t r = 0; same && r < grid.size(); ++r) {
      same = frame.times[r].ns == grid[r];
      std::size_t col = 0;
      for (const auto& s : streams) {
        long last = -1;
        for (std::size_t j = 0; j < s.size(); ++j)
          if (s.data.times[j].ns <= grid[r]) last = static_cast<long>(j);
        for (std::size_t c = 0; c < s.data.width(); ++c, ++col)
          same = same && last >= 0 && frame.at(r, col) == s.data.at(static_cast<std::size_t>(last), c);
      }
    }
    mismatches += !same;
  }
  return {mismatches == 0, std::to_string(100 - mismatches) + "/100 stream sets match"};
}

Outcome energy_map() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> watts(50.0, 2000.0);
  std::normal_distribution<double> normal;
  double noiseless = 0.0, noisy = 0.0, worst_cond = 0.0;
  int instances = 0;
  while (instances < 50) {
    const int K = 2 + static_cast<int>(rng() % 6);
    const long rows = 40 + static_cast<long>(rng() % 200);
    Matrix A(rows, K);
    for (long r = 0; r < rows; ++r) A.row(r) = detail::sample_dirichlet(K, 0.5, rng).transpose();
    const Eigen::JacobiSVD<Matrix> svd(A);
    const double cond = svd.singularValues()(0) / svd.singularValues()(K - 1);
    if (!(cond < 100.0)) continue;
    ++instances;
    worst_cond = std::max(worst_cond, cond);
    Vector w(K);
    for (int k = 0; k < K; ++k) w[k] = watts(rng);
    const Vector b = A * w;
    const Vector exact = fit_energy_map(A, b).w;
    noiseless = std::max(noiseless, ((exact - w).array().abs() / w.array().abs()).maxCoeff());
    Vector bn = b;
    for (long r = 0; r < rows; ++r) bn[r] *= 1.0 + 0.01 * normal(rng);
    const Vector est = fit_energy_map(A, bn).w;
    noisy = std::max(noisy, ((est - w).array().abs() / w.array().abs()).maxCoeff());
  }
  return {noiseless <= 1e-8 && noisy <= 0.05, "noiseless max rel error " + fmt(noiseless) +
                                                 ", 1% noise max rel error " + fmt(noisy) +
                                                 ", worst condition number " + fmt(worst_cond)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Runs the command-line tool through the shell; returns its exit code.
int sh(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string("\"") + GLDA_CLI_PATH + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Raw simulation through preprocessing, features, training, evaluation and
// the pattern/energy report.  Returns the artifacts to compare.
std::map<std::string, std::string> pipeline(const std::filesystem::path& dir, std::string& error) {
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto q = [](const std::filesystem::path& p) { return "\"" + p.string() + "\""; };
  const auto cfg = dir / "run.cfg";
  std::ofstream(cfg) << "sim_mode = raw\nsim_seconds = 600\nsample_rate = 1000\nK = 4\nn = 20\nT = 200\n"
                     << "batch_size = 2\nkappa = 0.7\ntau0 = 16\nseed = 11\n"
                     << "streams = water=" << (dir / "sim" / "water.csv").string()
                     << ", temperature=" << (dir / "sim" / "temperature.csv").string() << "\nshifts = water=0.25\n";
  const auto log = dir / "log.txt";
  const std::vector<std::string> steps{
      "simulate --config " + q(cfg) + " --out " + q(dir / "sim"),
      "preprocess --config " + q(cfg) + " --out " + q(dir / "frame.csv"),
      "extract --config " + q(cfg) + " --raw " + q(dir / "sim" / "raw.csv") + " --frame " + q(dir / "frame.csv") +
          " --out " + q(dir / "features.csv"),
      "train --config " + q(cfg) + " --data " + q(dir / "features.csv") + " --model " + q(dir / "model.ckpt"),
      "map --config " + q(cfg) + " --data " + q(dir / "features.csv") + " --model " + q(dir / "model.ckpt") +
          " --out " + q(dir / "patterns"),
  };
  for (const auto& s : steps)
    if (const int code = sh(s, log); code != 0) {
      error = "'" + s.substr(0, s.find(' ')) + "' exited " + std::to_string(code) + ": " + slurp(log);
      return {};
    }
  const std::string eval = "eval --config " + q(cfg) + " --data " + q(dir / "features.csv") + " --model " +
                           q(dir / "model.ckpt");
  const std::string cmd = std::string("\"") + GLDA_CLI_PATH + "\" " + eval + " >" + q(dir / "perplexity.txt");
  if (std::system(cmd.c_str()) != 0) {
    error = "'eval' failed";
    return {};
  }
  std::map<std::string, std::string> files;
  for (const char* name : {"model.ckpt", "patterns.pgm", "patterns_energy.txt", "patterns_proportions.csv",
                           "perplexity.txt", "features.csv", "frame.csv"})
    files[name] = slurp(dir / name);
  return files;
}

Outcome determinism() {
  const std::filesystem::path root = std::filesystem::path(GLDA_TEST_TMP) / "determinism";
  std::string error;
  const auto a = pipeline(root / "a", error);
  if (!error.empty()) return {false, error};
  const auto b = pipeline(root / "b", error);
  if (!error.empty()) return {false, error};
  std::string differing;
  for (const auto& [name, bytes] : a) {
    if (bytes.empty()) differing += " " + name + "(empty)";
    else if (b.at(name) != bytes) differing += " " + name;
  }
  if (!differing.empty()) return {false, "differing:" + differing};
  return {true, std::to_string(a.size()) + " artifacts byte-identical (checkpoint " +
                    std::to_string(a.at("model.ckpt").size()) + " bytes)"};
}

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
};

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const Criterion& c, const Outcome& o, double seconds) {
    const bool ok = o.pass && seconds < c.limit_seconds;
    failures += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << " " << c.id << " " << c.name << ": " << o.detail << " [" << fmt(seconds)
              << " s, limit " << c.limit_seconds << " s]" << std::endl;
  };
  auto timed = [&](const Criterion& c, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(c, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };

  timed({1, "exact update equivalence", 1.0}, exact_update);
  timed({2, "mean-space/natural-space equivalence", 1.0}, mean_space_equivalence);
  timed({3, "local ascent monotonicity", 5.0}, local_monotone);
  {
    const auto t0 = std::chrono::steady_clock::now();
    RecoveryResult r;
    try {
      r = recovery();
    } catch (const std::exception& e) {
      r.recovery = r.perplexity_trend = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report({4, "synthetic recovery", 60.0}, r.recovery, s);
    report({5, "perplexity trend", 60.0}, r.perplexity_trend, s);
  }
  timed({6, "batch-size trend", 300.0}, batch_size_trend);
  timed({7, "feature correctness", 5.0}, features);
  timed({8, "alignment oracle", 5.0}, alignment);
  timed({9, "energy-map recovery", 5.0}, energy_map);
  timed({10, "determinism", 180.0}, determinism);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
