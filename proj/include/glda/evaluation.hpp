#pragma once

// Model evaluation: held-out perplexity, per-window component proportions
// (pattern-regularity images), least-squares energy mapping, plus the
// synthetic corpus generator that follows the model's generative process.

#include "common.hpp"
#include "csv.hpp"
#include "inference.hpp"
#include "niw.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace glda {

struct GaussianComponent {
  Vector mean;
  Matrix covariance;
};

struct SyntheticCorpus {
  std::vector<PatternWindow> docs;
  Matrix true_theta;  // D x K
  std::vector<std::vector<int>> true_z;
  std::vector<GaussianComponent> true_components;
};

namespace detail {

inline Vector standard_normal(int F, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(F);
  for (int f = 0; f < F; ++f) z[f] = normal(rng);
  return z;
}

// Bartlett decomposition: Lambda = L A A^T L^T with L = chol(scale).
inline Matrix sample_wishart(const Matrix& scale, double dof, std::mt19937_64& rng) {
  const auto F = scale.rows();
  const Matrix L = Eigen::LLT<Matrix>(scale).matrixL();
  Matrix A = Matrix::Zero(F, F);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < F; ++i) {
    std::chi_squared_distribution<double> chi2(dof - static_cast<double>(i));
    A(i, i) = std::sqrt(chi2(rng));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = normal(rng);
  }
  const Matrix LA = L * A;
  return LA * LA.transpose();
}

inline Vector sample_dirichlet(int K, double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Vector theta(K);
  for (int k = 0; k < K; ++k) theta[k] = gamma(rng);
  const double total = theta.sum();
  if (!(total > 0.0)) {
    // Every draw underflowed (tiny alpha): all mass on one uniformly chosen component.
    theta.setZero();
    theta[std::uniform_int_distribution<int>(0, K - 1)(rng)] = 1.0;
    return theta;
  }
  return theta / total;
}

}  // namespace detail

/// Draws a corpus from the generative process: Sigma_k ~ IW(omega, v),
/// mu_k ~ N(m, Sigma_k / s), theta_d ~ Dir(alpha), z ~ Mult(theta_d),
/// x ~ N(mu_z, Sigma_z).  Passing `fixed` skips the component draw.
/// Window d starts at d * n seconds and each observation covers one second.
inline SyntheticCorpus sample_corpus(const ModelConfig& config, long D, long n, std::uint64_t seed,
                                     const std::vector<GaussianComponent>* fixed = nullptr) {
  config.validate();
  if (D < 1 || n < 1) throw ConfigError("sample_corpus: D and n must be >= 1");
  std::mt19937_64 rng(seed);
  const int K = config.K;
  const int F = config.F;
  SyntheticCorpus out;
  if (fixed) {
    if (static_cast<int>(fixed->size()) != K) throw ConfigError("sample_corpus: need K fixed components");
    for (const auto& c : *fixed)
      if (c.mean.size() != F || c.covariance.rows() != F || c.covariance.cols() != F)
        throw ConfigError("sample_corpus: fixed component has wrong dimension");
    out.true_components = *fixed;
  } else {
    const Matrix precision_scale = config.prior_omega.inverse();
    for (int k = 0; k < K; ++k) {
      const Matrix precision = detail::sample_wishart(precision_scale, config.prior_v, rng);
      Matrix sigma = precision.inverse();
      sigma = 0.5 * (sigma + sigma.transpose());
      const Matrix chol = Eigen::LLT<Matrix>(sigma / config.prior_s).matrixL();
      Vector mu = config.prior_m + chol * detail::standard_normal(F, rng);
      out.true_components.push_back({std::move(mu), std::move(sigma)});
    }
  }
  std::vector<Matrix> chols;
  for (const auto& c : out.true_components) chols.push_back(Eigen::LLT<Matrix>(c.covariance).matrixL());

  out.true_theta.resize(D, K);
  out.true_z.resize(D);
  out.docs.resize(D);
  for (long d = 0; d < D; ++d) {
    const Vector theta = detail::sample_dirichlet(K, config.alpha, rng);
    out.true_theta.row(d) = theta.transpose();
    std::discrete_distribution<int> pick(theta.data(), theta.data() + K);
    PatternWindow& doc = out.docs[d];
    doc.observations.resize(n, F);
    doc.start_time = Timestamp{d * n * Timestamp::kPerSecond};
    doc.span = static_cast<double>(n);
    out.true_z[d].resize(n);
    for (long i = 0; i < n; ++i) {
      const int z = pick(rng);
      out.true_z[d][i] = z;
      doc.observations.row(i) =
          (out.true_components[z].mean + chols[z] * detail::standard_normal(F, rng)).transpose();
    }
  }
  return out;
}

inline double perplexity_from_bound(double bound, double observations) {
  return std::exp(-bound / observations);
}

/// exp(-B / N): B sums per-document ELBO terms with the globals frozen and
/// local inference run to convergence; the global KL term is left out since
/// it does not scale with the held-out set.
inline double perplexity(std::span<const PatternWindow> heldout, const GlobalState& state,
                         const ModelConfig& config, const LocalOptions& local = {}) {
  if (heldout.empty()) throw ConfigError("perplexity: empty held-out set");
  double bound = 0.0;
  double count = 0.0;
  for (const auto& doc : heldout) {
    const LocalState ls = local_step(doc, state, config.alpha, local);
    bound += document_elbo(doc, ls, state, config.alpha);
    count += static_cast<double>(doc.size());
  }
  if (count == 0.0) throw ConfigError("perplexity: held-out set has no observations");
  return perplexity_from_bound(bound, count);
}

struct PatternMatrix {
  Matrix values;  // K x T, column tau = normalized gamma of window tau
  std::vector<Timestamp> window_times;
};

inline PatternMatrix pattern_matrix(std::span<const PatternWindow> docs, const GlobalState& state,
                                    double alpha, const LocalOptions& local = {}) {
  if (docs.empty()) throw ConfigError("pattern_matrix: no windows");
  PatternMatrix pm;
  pm.values.resize(state.K(), static_cast<Eigen::Index>(docs.size()));
  for (std::size_t tau = 0; tau < docs.size(); ++tau) {
    if (tau > 0 && docs[tau].start_time < docs[tau - 1].start_time)
      throw ConfigError("pattern_matrix: windows are not chronological");
    const LocalState ls = local_step(docs[tau], state, alpha, local);
    pm.values.col(static_cast<Eigen::Index>(tau)) = ls.gamma / ls.gamma.sum();
    pm.window_times.push_back(docs[tau].start_time);
  }
  return pm;
}

inline unsigned char gray_level(double p) {
  return static_cast<unsigned char>(std::lround(255.0 * std::clamp(p, 0.0, 1.0)));
}

/// Binary PGM, one row per component and one column per window; 255 is probability 1.
inline void write_pgm(std::ostream& os, const Matrix& values) {
  os << "P5\n" << values.cols() << ' ' << values.rows() << "\n255\n";
  for (Eigen::Index k = 0; k < values.rows(); ++k)
    for (Eigen::Index t = 0; t < values.cols(); ++t) os.put(static_cast<char>(gray_level(values(k, t))));
}

/// Header `time,c0..c{K-1}`, one row per window.
inline void write_proportions_csv(std::ostream& os, const PatternMatrix& pm) {
  os << "time";
  for (Eigen::Index k = 0; k < pm.values.rows(); ++k) os << ",c" << k;
  os << '\n';
  for (Eigen::Index t = 0; t < pm.values.cols(); ++t) {
    os << format_seconds(pm.window_times[t]);
    for (Eigen::Index k = 0; k < pm.values.rows(); ++k) os << ',' << format_double(pm.values(k, t));
    os << '\n';
  }
}

struct EnergyMap {
  Vector w;  // joules per unit proportion of each component
  double residual_norm = 0.0;
};

/// Minimum-norm least-squares solution of A w = b.
inline EnergyMap fit_energy_map(const Matrix& A, const Vector& b) {
  if (A.rows() != b.size()) throw ConfigError("fit_energy_map: A has " + std::to_string(A.rows()) +
                                              " rows but b has " + std::to_string(b.size()));
  if (A.rows() == 0 || A.cols() == 0) throw ConfigError("fit_energy_map: empty system");
  EnergyMap map;
  map.w = A.completeOrthogonalDecomposition().solve(b);
  map.residual_norm = (A * map.w - b).norm();
  return map;
}

inline Vector predict_energy(const Matrix& A, const EnergyMap& map) {
  if (A.cols() != map.w.size()) throw ConfigError("predict_energy: A has " + std::to_string(A.cols()) +
                                                  " columns but w has " + std::to_string(map.w.size()));
  return A * map.w;
}

/// Sum over each window of active power times the duration of one feature row.
inline Vector per_pattern_energy(std::span<const PatternWindow> docs, long power_column,
                                 double row_seconds) {
  Vector b(static_cast<Eigen::Index>(docs.size()));
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (power_column < 0 || power_column >= docs[d].dim())
      throw ConfigError("per_pattern_energy: power column " + std::to_string(power_column) +
                        " not present");
    b[static_cast<Eigen::Index>(d)] = docs[d].observations.col(power_column).sum() * row_seconds;
  }
  return b;
}

/// Permutation perm minimizing sum_k ||learned[perm[k]] - truth[k]||, by
/// exhaustive search (fine for K <= 8).
inline std::vector<int> match_components(const std::vector<Vector>& learned,
                                         const std::vector<Vector>& truth) {
  if (learned.size() != truth.size()) throw ConfigError("match_components: size mismatch");
  std::vector<int> perm(truth.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) cost += (learned[perm[k]] - truth[k]).norm();
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double pearson(const Vector& a, const Vector& b) {
  const Vector da = a.array() - a.mean();
  const Vector db = b.array() - b.mean();
  const double denom = da.norm() * db.norm();
  return denom > 0.0 ? da.dot(db) / denom : 0.0;
}

}  // namespace glda
