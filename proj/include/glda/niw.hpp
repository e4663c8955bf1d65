#pragma once

// Normal-Inverse-Wishart machinery for Gaussian components.
//
// Parameterization throughout: Sigma ~ IW(omega, v), mu | Sigma ~ N(m, Sigma / s),
// so the precision Lambda = Sigma^-1 is Wishart with scale omega^-1 and v
// degrees of freedom.  In natural coordinates a posterior is the tuple
//
//   (s, v, s*m, omega + s*m*m^T)
//
// which is the space where stochastic updates interpolate linearly.

#include "common.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace glda {

inline double digamma(double x) { return boost::math::digamma(x); }

/// Fixed hyper-parameters of the model.
struct ModelConfig {
  int K = 1;
  int F = 1;
  double alpha = 1.0;
  Vector prior_m;
  Matrix prior_omega;
  double prior_s = 1.0;
  double prior_v = 3.0;
  long corpus_size_D = 1;

  // alpha = 1/K, m = 0, omega = I, s = 1, v = F + 2.
  static ModelConfig defaults(int K, int F, long D = 1) {
    ModelConfig c;
    c.K = K;
    c.F = F;
    c.alpha = 1.0 / K;
    c.prior_m = Vector::Zero(F);
    c.prior_omega = Matrix::Identity(F, F);
    c.prior_s = 1.0;
    c.prior_v = F + 2.0;
    c.corpus_size_D = D;
    return c;
  }

  // Throws ConfigError naming the first offending field.
  void validate() const {
    if (K < 1) throw ConfigError("K must be a positive integer (got " + std::to_string(K) + ")");
    if (F < 1) throw ConfigError("F must be a positive integer (got " + std::to_string(F) + ")");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be > 0");
    if (prior_m.size() != F) throw ConfigError("m must have F entries");
    if (!prior_m.allFinite()) throw ConfigError("m must be finite");
    if (prior_omega.rows() != F || prior_omega.cols() != F)
      throw ConfigError("omega must be F x F");
    if (!prior_omega.allFinite()) throw ConfigError("omega must be finite");
    if ((prior_omega - prior_omega.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw ConfigError("omega must be symmetric");
    if (prior_omega.llt().info() != Eigen::Success)
      throw ConfigError("omega must be positive-definite");
    if (!(prior_s > 0.0)) throw ConfigError("s must be > 0");
    if (!(prior_v > F - 1.0)) throw ConfigError("v must exceed F - 1");
    if (corpus_size_D < 1) throw ConfigError("D must be >= 1");
  }
};

/// Variational NIW posterior of one component.
struct NiwPosterior {
  Vector qm;
  Matrix qomega;
  double qs = 1.0;
  double qv = 1.0;

  int dim() const { return static_cast<int>(qm.size()); }

  friend bool operator==(const NiwPosterior&, const NiwPosterior&) = default;
};

/// Natural-parameter view (s, v, s*m, omega + s*m*m^T) of an NIW.
struct NiwNatural {
  double s = 0.0;
  double v = 0.0;
  Vector ell;
  Matrix big_s;
};

inline NiwNatural to_natural(const NiwPosterior& p) {
  return {p.qs, p.qv, p.qs * p.qm, p.qomega + p.qs * p.qm * p.qm.transpose()};
}

inline NiwNatural prior_natural(const ModelConfig& c) {
  return {c.prior_s, c.prior_v, c.prior_s * c.prior_m,
          c.prior_omega + c.prior_s * c.prior_m * c.prior_m.transpose()};
}

inline NiwPosterior prior_posterior(const ModelConfig& c) {
  return {c.prior_m, c.prior_omega, c.prior_s, c.prior_v};
}

/// Converts back to mean space.  The scale matrix is re-symmetrized and its
/// positive-definiteness checked; on failure a jitter of
/// 1e-10 * trace / F * I is tried once before giving up.
inline NiwPosterior from_natural(const NiwNatural& n) {
  const int F = static_cast<int>(n.ell.size());
  if (!(n.s > 0.0)) throw NumericalError("natural parameter s is not positive");
  if (!(n.v > F - 1.0)) throw NumericalError("natural parameter v does not exceed F - 1");
  NiwPosterior p;
  p.qs = n.s;
  p.qv = n.v;
  p.qm = n.ell / n.s;
  Matrix omega = n.big_s - n.ell * n.ell.transpose() / n.s;
  omega = 0.5 * (omega + omega.transpose());
  if (!omega.allFinite()) throw NumericalError("scale matrix has non-finite entries");
  if (omega.llt().info() != Eigen::Success) {
    const double jitter = 1e-10 * omega.trace() / F;
    omega.diagonal().array() += std::max(jitter, 0.0);
    if (omega.llt().info() != Eigen::Success)
      throw NumericalError("scale matrix lost positive-definiteness");
  }
  p.qomega = std::move(omega);
  return p;
}

/// Precomputed per-component quantities needed to evaluate E_q[log N(x | mu, Sigma)]
/// repeatedly: the Cholesky factor of qomega and the x-independent constant.
class ExpectedLogGaussian {
public:
  explicit ExpectedLogGaussian(const NiwPosterior& p) : qm_(p.qm), qv_(p.qv), llt_(p.qomega) {
    if (llt_.info() != Eigen::Success)
      throw NumericalError("qomega is not positive-definite");
    const int F = p.dim();
    double psi_sum = 0.0;
    for (int j = 1; j <= F; ++j) psi_sum += digamma((p.qv + 1.0 - j) / 2.0);
    const double log_det = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
    constant_ = 0.5 * (psi_sum + F * std::numbers::ln2 - log_det) -
                0.5 * F * std::log(2.0 * std::numbers::pi) - F / (2.0 * p.qs);
  }

  template <typename Derived>
  double operator()(const Eigen::MatrixBase<Derived>& x) const {
    const Vector diff = x - qm_;
    const double quad = llt_.matrixL().solve(diff).squaredNorm();
    return constant_ - 0.5 * qv_ * quad;
  }

private:
  Vector qm_;
  double qv_;
  Eigen::LLT<Matrix> llt_;
  double constant_ = 0.0;
};

inline double expected_log_gaussian(const Vector& x, const NiwPosterior& post) {
  if (x.size() != post.dim()) throw ConfigError("feature dimension mismatch");
  return ExpectedLogGaussian(post)(x);
}

inline double log_multigamma(double a, int F) {
  double r = 0.25 * F * (F - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= F; ++j) r += std::lgamma(a + (1.0 - j) / 2.0);
  return r;
}

inline double multi_digamma(double a, int F) {
  double r = 0.0;
  for (int j = 1; j <= F; ++j) r += digamma(a + (1.0 - j) / 2.0);
  return r;
}

/// KL(q || p) between two NIW distributions, split as the Wishart KL on the
/// precision plus the expected Gaussian KL on the mean.
inline double kl_niw(const NiwPosterior& q, const NiwPosterior& p) {
  const int F = q.dim();
  Eigen::LLT<Matrix> q_llt(q.qomega);
  Eigen::LLT<Matrix> p_llt(p.qomega);
  if (q_llt.info() != Eigen::Success || p_llt.info() != Eigen::Success)
    throw NumericalError("kl_niw: scale matrix not positive-definite");
  auto log_det = [](const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  };
  // Precision scales are qomega^-1 and pomega^-1, hence V0^-1 V1 = pomega qomega^-1.
  const Matrix ratio = q_llt.solve(p.qomega);
  const double trace = ratio.trace();
  const double wishart = -0.5 * p.qv * (log_det(p_llt) - log_det(q_llt)) +
                         0.5 * q.qv * (trace - F) + log_multigamma(0.5 * p.qv, F) -
                         log_multigamma(0.5 * q.qv, F) +
                         0.5 * (q.qv - p.qv) * multi_digamma(0.5 * q.qv, F);
  const Vector diff = q.qm - p.qm;
  const double quad = q_llt.matrixL().solve(diff).squaredNorm();
  const double gaussian = 0.5 * (F * p.qs / q.qs + p.qs * q.qv * quad - F + F * std::log(q.qs / p.qs));
  return wishart + gaussian;
}

}  // namespace glda
