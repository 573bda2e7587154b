#pragma once

// Multivariate Gaussian and linear-Gaussian algebra. Everything is evaluated
// in log space through Cholesky factors; no explicit inverses or determinants.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace hpm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Gaussian {
  Vector mean;
  Matrix cov;

  Eigen::Index dim() const { return mean.size(); }
  // Throws DimensionMismatch / NotPositiveDefinite on invariant violation.
  void validate() const;
};

// x_out ~ N(offset + gain * x_in, noise_cov)
struct LinearGaussian {
  Vector offset;
  Matrix gain;
  Matrix noise_cov;

  Eigen::Index dim_in() const { return gain.cols(); }
  Eigen::Index dim_out() const { return offset.size(); }
  void validate() const;

  static LinearGaussian identity(Eigen::Index dim, const Matrix& noise_cov);
};

struct WeightedGaussianMixture {
  std::vector<Gaussian> components;
  Vector log_weights;  // normalized: logsumexp == 0

  void validate() const;
};

bool is_symmetric(const Matrix& m);

// Ridge added when a plain factorization fails or its smallest pivot is
// below it: 1e-8 * trace(cov) / d (1e-8 if the trace is not positive).
double ridge_for(const Matrix& cov);

// Cholesky factorization with escalating ridge fallback. The stored factor is
// of the (possibly regularized) matrix; `ridge()` reports what was added.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(const Matrix& cov);

  const Eigen::LLT<Matrix>& llt() const { return llt_; }
  Matrix lower() const { return llt_.matrixL(); }
  double ridge() const { return ridge_; }
  double log_det() const { return log_det_; }
  Eigen::Index dim() const { return llt_.rows(); }

  Vector solve(const Vector& b) const { return llt_.solve(b); }
  Matrix solve(const Matrix& b) const { return llt_.solve(b); }
  // ||L^{-1} v||^2 = v^T cov^{-1} v
  double mahalanobis_sq(const Vector& v) const;

 private:
  Eigen::LLT<Matrix> llt_;
  double ridge_ = 0.0;
  double log_det_ = 0.0;
};

// A Gaussian with its factorization cached, for repeated density evaluation.
class PreparedGaussian {
 public:
  explicit PreparedGaussian(const Gaussian& g);

  double log_density(const Eigen::Ref<const Vector>& x) const;
  const Vector& mean() const { return mean_; }
  const CholeskyFactor& factor() const { return factor_; }

 private:
  Vector mean_;
  CholeskyFactor factor_;
  double log_norm_;
};

double log_density(const Gaussian& g, const Vector& x);

// N(x_m; offset + gain*mean, gain*cov*gain^T + noise_cov): the evidence of a
// linear-Gaussian measurement after integrating out the prior.
Gaussian marginal_likelihood(const Gaussian& prior, const LinearGaussian& lik);

// Conjugate posterior p(x | obs) for prior N(mean, cov) and obs ~ lik(x).
Gaussian posterior_update(const Gaussian& prior, const LinearGaussian& lik, const Vector& obs);

std::vector<Vector> sample(const Gaussian& g, std::size_t n, std::uint64_t seed);
// One draw using a caller-owned engine (ancestral sampling).
Vector sample_one(const Gaussian& g, std::mt19937_64& rng);

// Moment-matched single Gaussian of a mixture.
Gaussian mixture_collapse(const WeightedGaussianMixture& m);

double logsumexp(std::span<const double> values);

// Symmetric eigen-decomposition with eigenvalues clamped to >= floor. This is
// the exact constrained maximum-likelihood covariance for a fixed mean.
Matrix floor_eigenvalues(const Matrix& cov, double floor);

}  // namespace hpm
