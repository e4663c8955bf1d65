#pragma once

// Online Gaussian LDA: local coordinate ascent over (phi, gamma), noisy
// natural-gradient steps on the component posteriors, and the ELBO.

#include "common.hpp"
#include "niw.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace glda {

/// One "document": n feature vectors (rows) observed over a fixed span.
struct PatternWindow {
  Matrix observations;  // n x F
  Timestamp start_time;
  double span = 0.0;  // seconds

  Eigen::Index size() const { return observations.rows(); }
  Eigen::Index dim() const { return observations.cols(); }
};

struct LocalState {
  Vector gamma;  // K
  Matrix phi;    // n x K
};

struct GlobalState {
  std::vector<NiwPosterior> components;
  long t = 0;

  int K() const { return static_cast<int>(components.size()); }
  int F() const { return components.empty() ? 0 : components.front().dim(); }

  friend bool operator==(const GlobalState&, const GlobalState&) = default;
};

struct LearningSchedule {
  double kappa = 0.9;
  double tau0 = 1024.0;

  void validate() const {
    if (!(kappa > 0.5 && kappa <= 1.0)) throw ConfigError("kappa must lie in (0.5, 1]");
    if (!(tau0 >= 0.0)) throw ConfigError("tau0 must be >= 0");
  }
};

/// rho_t = (tau0 + t)^-kappa
inline double learning_rate(long t, const LearningSchedule& schedule) {
  const double base = schedule.tau0 + static_cast<double>(t);
  if (!(base > 0.0)) throw std::domain_error("learning_rate: tau0 + t must be positive");
  return std::pow(base, -schedule.kappa);
}

/// Seeded initialization: qm_k ~ N(m, omega / s), remaining parameters at the prior.
inline GlobalState initialize_state(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Matrix chol = Eigen::LLT<Matrix>(config.prior_omega / config.prior_s).matrixL();
  GlobalState state;
  state.components.reserve(config.K);
  for (int k = 0; k < config.K; ++k) {
    Vector z(config.F);
    for (int f = 0; f < config.F; ++f) z[f] = normal(rng);
    state.components.push_back(
        {config.prior_m + chol * z, config.prior_omega, config.prior_s, config.prior_v});
  }
  return state;
}

/// Seeds qm_k from observations by D^2 sampling (k-means++): the first mean
/// is a uniformly drawn observation, each further one is drawn with
/// probability proportional to the squared distance to the nearest mean
/// chosen so far.  At most `pool_size` observations are considered.
/// Remaining parameters start at the prior.
inline GlobalState initialize_from_data(const ModelConfig& config,
                                        std::span<const PatternWindow> corpus, std::uint64_t seed,
                                        std::size_t pool_size = 10000) {
  config.validate();
  std::vector<std::pair<std::size_t, Eigen::Index>> all;
  for (std::size_t d = 0; d < corpus.size(); ++d)
    for (Eigen::Index i = 0; i < corpus[d].size(); ++i) all.emplace_back(d, i);
  if (all.empty()) throw ConfigError("initialize_from_data: corpus has no observations");
  std::mt19937_64 rng(seed);
  std::vector<Vector> pool;
  const std::size_t take = std::min(pool_size, all.size());
  pool.reserve(take);
  if (take < all.size()) {
    std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
    for (std::size_t j = 0; j < take; ++j) {
      const auto [d, i] = all[pick(rng)];
      pool.push_back(corpus[d].observations.row(i).transpose());
    }
  } else {
    for (const auto& [d, i] : all) pool.push_back(corpus[d].observations.row(i).transpose());
  }
  for (const auto& x : pool)
    if (x.size() != config.F) throw ConfigError("initialize_from_data: feature dimension mismatch");

  GlobalState state;
  std::vector<double> nearest(pool.size(), std::numeric_limits<double>::infinity());
  std::size_t chosen = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
  for (int k = 0; k < config.K; ++k) {
    if (k > 0) {
      const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
      if (total > 0.0) {
        std::discrete_distribution<std::size_t> draw(nearest.begin(), nearest.end());
        chosen = draw(rng);
      } else {
        chosen = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
      }
    }
    const Vector& mean = pool[chosen];
    for (std::size_t j = 0; j < pool.size(); ++j)
      nearest[j] = std::min(nearest[j], (pool[j] - mean).squaredNorm());
    state.components.push_back({mean, config.prior_omega, config.prior_s, config.prior_v});
  }
  return state;
}

/// n x K matrix of E_q[log N(x_i | mu_k, Sigma_k)].
inline Matrix expected_log_likelihoods(const PatternWindow& doc, const GlobalState& state) {
  if (doc.size() > 0 && doc.dim() != state.F())
    throw ConfigError("window has " + std::to_string(doc.dim()) + " features, model expects " +
                      std::to_string(state.F()));
  Matrix out(doc.size(), state.K());
  for (int k = 0; k < state.K(); ++k) {
    const ExpectedLogGaussian eval(state.components[k]);
    for (Eigen::Index i = 0; i < doc.size(); ++i) out(i, k) = eval(doc.observations.row(i).transpose());
  }
  return out;
}

struct LocalOptions {
  double tol = 1e-4;  // on max_k |delta gamma_k| / n
  int max_iter = 100;
  // Called after every (phi, gamma) sweep; used by tests to watch the ascent.
  std::function<void(const LocalState&)> on_sweep;
};

namespace detail {

inline void update_phi(const Matrix& loglik, const Vector& gamma, Matrix& phi) {
  Eigen::RowVectorXd psi(gamma.size());
  for (Eigen::Index k = 0; k < gamma.size(); ++k) psi[k] = digamma(gamma[k]);
  phi = loglik.rowwise() + psi;
  for (Eigen::Index i = 0; i < phi.rows(); ++i) {
    const double mx = phi.row(i).maxCoeff();
    phi.row(i) = (phi.row(i).array() - mx).exp();
    phi.row(i) /= phi.row(i).sum();
  }
}

}  // namespace detail

/// Coordinate ascent on one window's (phi, gamma) with the globals held fixed.
/// `gamma_init` warm-starts the iteration; by default gamma = alpha + n / K.
inline LocalState local_step(const PatternWindow& doc, const GlobalState& state, double alpha,
                             const LocalOptions& opts = {}, const Vector* gamma_init = nullptr) {
  const int K = state.K();
  const Eigen::Index n = doc.size();
  if (!(opts.tol > 0.0)) throw ConfigError("local tolerance must be > 0");
  LocalState local;
  local.phi.resize(n, K);
  if (n == 0) {
    local.gamma = Vector::Constant(K, alpha);
    return local;
  }
  const Matrix loglik = expected_log_likelihoods(doc, state);
  if (gamma_init) {
    if (gamma_init->size() != K) throw ConfigError("gamma warm start has wrong size");
    local.gamma = *gamma_init;
  } else {
    local.gamma = Vector::Constant(K, alpha + static_cast<double>(n) / K);
  }
  for (int it = 0; it < opts.max_iter; ++it) {
    detail::update_phi(loglik, local.gamma, local.phi);
    Vector next = (local.phi.colwise().sum().transpose().array() + alpha).matrix();
    const double change = (next - local.gamma).cwiseAbs().maxCoeff() / static_cast<double>(n);
    local.gamma = std::move(next);
    if (opts.on_sweep) opts.on_sweep(local);
    if (change < opts.tol) break;
  }
  return local;
}

inline double xlogx_sum(const Matrix& phi) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    const double p = phi.data()[i];
    if (p > 0.0) acc += p * std::log(p);
  }
  return acc;
}

/// Per-document ELBO contribution:
///   E[log p(x|z,beta)] + E[log p(z|theta)] - E[log q(z)] + E[log p(theta)] - E[log q(theta)]
inline double document_elbo(const PatternWindow& doc, const LocalState& local,
                            const GlobalState& state, double alpha, const Matrix* loglik = nullptr) {
  const int K = state.K();
  const Vector& g = local.gamma;
  const double g_sum = g.sum();
  const double psi_sum = digamma(g_sum);
  Vector elog_theta(K);
  for (int k = 0; k < K; ++k) elog_theta[k] = digamma(g[k]) - psi_sum;

  double value = 0.0;
  if (doc.size() > 0) {
    Matrix computed;
    if (!loglik) {
      computed = expected_log_likelihoods(doc, state);
      loglik = &computed;
    }
    value += local.phi.cwiseProduct(*loglik).sum();
    value += (local.phi * elog_theta).sum();
    value -= xlogx_sum(local.phi);
  }
  value += std::lgamma(K * alpha) - K * std::lgamma(alpha) + (alpha - 1.0) * elog_theta.sum();
  value -= std::lgamma(g_sum);
  for (int k = 0; k < K; ++k) value += std::lgamma(g[k]) - (g[k] - 1.0) * elog_theta[k];
  return value;
}

/// Sum over components of KL(q(beta_k) || p(beta_k)).
inline double global_kl(const GlobalState& state, const ModelConfig& config) {
  const NiwPosterior prior = prior_posterior(config);
  double kl = 0.0;
  for (const auto& c : state.components) kl += kl_niw(c, prior);
  return kl;
}

inline double elbo(std::span<const PatternWindow> docs, std::span<const LocalState> locals,
                   const GlobalState& state, const ModelConfig& config) {
  if (docs.size() != locals.size()) throw ConfigError("elbo: docs and locals differ in length");
  double value = -global_kl(state, config);
  for (std::size_t d = 0; d < docs.size(); ++d)
    value += document_elbo(docs[d], locals[d], state, config.alpha);
  return value;
}

/// Noisy estimate lambda-hat of the optimal natural parameters from a minibatch,
/// with sufficient statistics scaled by D / |B|.
inline std::vector<NiwNatural> intermediate_global(std::span<const PatternWindow> docs,
                                                   std::span<const LocalState> locals,
                                                   const ModelConfig& config) {
  if (docs.empty()) throw ConfigError("intermediate_global: empty batch");
  if (docs.size() != locals.size()) throw ConfigError("intermediate_global: batch/local size mismatch");
  if (static_cast<long>(docs.size()) > config.corpus_size_D)
    throw ConfigError("intermediate_global: batch larger than D");
  const int K = config.K;
  const int F = config.F;
  std::vector<double> mass(K, 0.0);
  std::vector<Vector> first(K, Vector::Zero(F));
  std::vector<Matrix> second(K, Matrix::Zero(F, F));
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const Matrix& x = docs[d].observations;
    const Matrix& phi = locals[d].phi;
    if (x.rows() == 0) continue;
    if (x.cols() != F || phi.cols() != K || phi.rows() != x.rows())
      throw ConfigError("intermediate_global: dimension mismatch");
    for (int k = 0; k < K; ++k) {
      mass[k] += phi.col(k).sum();
      first[k] += x.transpose() * phi.col(k);
      second[k] += x.transpose() * phi.col(k).asDiagonal() * x;
    }
  }
  const double scale = static_cast<double>(config.corpus_size_D) / static_cast<double>(docs.size());
  const NiwNatural prior = prior_natural(config);
  std::vector<NiwNatural> out(K);
  for (int k = 0; k < K; ++k) {
    out[k].s = prior.s + scale * mass[k];
    out[k].v = prior.v + scale * mass[k];
    out[k].ell = prior.ell + scale * first[k];
    out[k].big_s = prior.big_s + scale * second[k];
  }
  return out;
}

/// lambda <- (1 - rho) lambda + rho lambda-hat, in natural coordinates.
inline GlobalState global_step(const GlobalState& state, std::span<const NiwNatural> lambda_hat,
                               double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("global_step: rho must lie in (0, 1]");
  if (static_cast<int>(lambda_hat.size()) != state.K())
    throw ConfigError("global_step: lambda-hat has wrong component count");
  GlobalState next;
  next.t = state.t + 1;
  next.components.reserve(state.components.size());
  for (std::size_t k = 0; k < state.components.size(); ++k) {
    const NiwNatural cur = to_natural(state.components[k]);
    const NiwNatural& hat = lambda_hat[k];
    NiwNatural mixed{(1.0 - rho) * cur.s + rho * hat.s, (1.0 - rho) * cur.v + rho * hat.v,
                     (1.0 - rho) * cur.ell + rho * hat.ell,
                     (1.0 - rho) * cur.big_s + rho * hat.big_s};
    next.components.push_back(from_natural(mixed));
  }
  return next;
}

struct IterationReport {
  long t = 0;
  double rho = 0.0;
  long batch_id = 0;
  std::vector<std::size_t> doc_ids;
  double elbo_estimate = 0.0;  // D/|B| * sum of batch document terms - global KL
};

enum class InitMethod {
  prior,  // qm_k ~ N(m, omega / s)
  data,   // k-means++ seeding from the corpus
};

struct TrainOptions {
  InitMethod init = InitMethod::data;
  int batch_size = 1;
  long iters = 0;
  std::uint64_t seed = 0;
  LocalOptions local;
  std::function<void(const IterationReport&)> observer;
};

/// One SVI iteration on an explicit minibatch.  Returns the updated state.
inline GlobalState svi_step(const GlobalState& state, std::span<const PatternWindow> batch,
                            const ModelConfig& config, double rho, const LocalOptions& local_opts,
                            double* elbo_estimate = nullptr) {
  std::vector<LocalState> locals;
  locals.reserve(batch.size());
  for (const auto& doc : batch) locals.push_back(local_step(doc, state, config.alpha, local_opts));
  if (elbo_estimate) {
    double sum = 0.0;
    for (std::size_t d = 0; d < batch.size(); ++d)
      sum += document_elbo(batch[d], locals[d], state, config.alpha);
    *elbo_estimate = static_cast<double>(config.corpus_size_D) / batch.size() * sum -
                     global_kl(state, config);
  }
  const auto lambda_hat = intermediate_global(batch, locals, config);
  return global_step(state, lambda_hat, rho);
}

/// Online training loop.  Minibatches are consecutive slices of a per-epoch
/// permutation of the corpus; the permutation is redrawn from the seeded
/// generator whenever it runs out, so `iters` may exceed the corpus size.
inline GlobalState fit_online(std::span<const PatternWindow> corpus, const ModelConfig& config,
                              const LearningSchedule& schedule, const TrainOptions& opts) {
  config.validate();
  schedule.validate();
  if (opts.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (corpus.empty()) throw ConfigError("fit_online: corpus yields no windows");
  for (const auto& doc : corpus)
    if (doc.size() > 0 && doc.dim() != config.F)
      throw ConfigError("window has " + std::to_string(doc.dim()) + " features, config F = " +
                        std::to_string(config.F));

  GlobalState state = opts.init == InitMethod::prior ? initialize_state(config, opts.seed)
                                                     : initialize_from_data(config, corpus, opts.seed);
  // Separate stream for batch order so K does not perturb the permutation.
  std::mt19937_64 order_rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(corpus.size());
  std::size_t cursor = order.size();

  std::vector<PatternWindow> batch;
  IterationReport report;
  for (long it = 0; it < opts.iters; ++it) {
    batch.clear();
    report.doc_ids.clear();
    for (int b = 0; b < opts.batch_size; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      report.doc_ids.push_back(order[cursor]);
      batch.push_back(corpus[order[cursor++]]);
    }
    const double rho = learning_rate(state.t, schedule);
    double estimate = 0.0;
    state = svi_step(state, batch, config, rho, opts.local, opts.observer ? &estimate : nullptr);
    if (opts.observer) {
      report.t = it;
      report.rho = rho;
      report.batch_id = it;
      report.elbo_estimate = estimate;
      opts.observer(report);
    }
  }
  return state;
}

}  // namespace glda
