#include "hpm/gauss.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "hpm/error.hpp"
#include "hpm/kernels.hpp"

namespace hpm {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
// 1e-8 up to 1e-4 of the mean variance; anything needing more is not a
// rounding problem.
constexpr int kMaxRidgeEscalations = 5;

std::string dims(Eigen::Index a, Eigen::Index b) { return std::to_string(a) + " vs " + std::to_string(b); }

void require_square_symmetric(const Matrix& m, Eigen::Index d, const char* what) {
  if (m.rows() != d || m.cols() != d)
    fail(ErrorKind::DimensionMismatch, std::string(what) + " is " + std::to_string(m.rows()) + "x" +
                                           std::to_string(m.cols()) + ", expected " + std::to_string(d));
  if (!is_symmetric(m)) fail(ErrorKind::NotPositiveDefinite, std::string(what) + " is not symmetric");
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

bool is_symmetric(const Matrix& m) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-12 * std::max(1.0, std::abs(m(i, j)))) return false;
  return true;
}

double ridge_for(const Matrix& cov) {
  const double scale = cov.rows() > 0 ? cov.trace() / static_cast<double>(cov.rows()) : 0.0;
  return 1e-8 * (scale > 0.0 && std::isfinite(scale) ? scale : 1.0);
}

CholeskyFactor::CholeskyFactor(const Matrix& cov) {
  if (cov.rows() != cov.cols()) fail(ErrorKind::DimensionMismatch, "covariance is not square");
  if (!cov.allFinite()) fail(ErrorKind::NotPositiveDefinite, "covariance has non-finite entries");
  const Eigen::Index d = cov.rows();
  const double eps = ridge_for(cov);

  auto accept = [&](double min_pivot_sq) { return llt_.info() == Eigen::Success && min_pivot_sq > eps; };
  auto min_pivot_sq = [&] {
    const auto diag = llt_.matrixLLT().diagonal();
    return d > 0 ? diag.cwiseAbs2().minCoeff() : std::numeric_limits<double>::infinity();
  };

  llt_.compute(cov);
  if (!accept(min_pivot_sq())) {
    double ridge = eps;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxRidgeEscalations; ++attempt, ridge *= 10.0) {
      llt_.compute(cov + ridge * Matrix::Identity(d, d));
      if (llt_.info() == Eigen::Success && min_pivot_sq() > 0.0) {
        ridge_ = ridge;
        ok = true;
        break;
      }
    }
    if (!ok) fail(ErrorKind::NotPositiveDefinite, "Cholesky failed after regularization");
  }
  log_det_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

double CholeskyFactor::mahalanobis_sq(const Vector& v) const {
  const Vector w = llt_.matrixL().solve(v);
  return w.squaredNorm();
}

PreparedGaussian::PreparedGaussian(const Gaussian& g) : mean_(g.mean), factor_(g.cov) {
  if (g.cov.rows() != g.mean.size()) fail(ErrorKind::DimensionMismatch, "covariance " + dims(g.cov.rows(), g.mean.size()));
  log_norm_ = -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + factor_.log_det());
}

double PreparedGaussian::log_density(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != mean_.size()) fail(ErrorKind::DimensionMismatch, "point " + dims(x.size(), mean_.size()));
  const Vector diff = x - mean_;
  return log_norm_ - 0.5 * factor_.mahalanobis_sq(diff);
}

void Gaussian::validate() const {
  require_square_symmetric(cov, mean.size(), "Gaussian covariance");
  CholeskyFactor check(cov);
}

void LinearGaussian::validate() const {
  if (gain.rows() != offset.size())
    fail(ErrorKind::DimensionMismatch, "gain rows " + dims(gain.rows(), offset.size()));
  require_square_symmetric(noise_cov, offset.size(), "noise covariance");
  CholeskyFactor check(noise_cov);
}

LinearGaussian LinearGaussian::identity(Eigen::Index dim, const Matrix& noise_cov) {
  return {Vector::Zero(dim), Matrix::Identity(dim, dim), noise_cov};
}

void WeightedGaussianMixture::validate() const {
  if (components.empty()) fail(ErrorKind::EmptyInput, "mixture has no components");
  if (static_cast<std::size_t>(log_weights.size()) != components.size())
    fail(ErrorKind::DimensionMismatch, "mixture weights " + dims(log_weights.size(), components.size()));
  const auto d = components.front().dim();
  for (const auto& c : components)
    if (c.dim() != d) fail(ErrorKind::DimensionMismatch, "mixture component " + dims(c.dim(), d));
  const double lse = logsumexp({log_weights.data(), static_cast<std::size_t>(log_weights.size())});
  if (std::abs(lse) > 1e-10) fail(ErrorKind::InvalidArgument, "mixture log weights are not normalized");
}

double log_density(const Gaussian& g, const Vector& x) { return PreparedGaussian(g).log_density(x); }

Gaussian marginal_likelihood(const Gaussian& prior, const LinearGaussian& lik) {
  if (lik.gain.cols() != prior.mean.size())
    fail(ErrorKind::DimensionMismatch, "gain columns " + dims(lik.gain.cols(), prior.mean.size()));
  if (lik.gain.rows() != lik.offset.size() || lik.noise_cov.rows() != lik.offset.size())
    fail(ErrorKind::DimensionMismatch, "measurement model is inconsistent");
  Gaussian out;
  out.mean = lik.offset + lik.gain * prior.mean;
  out.cov = symmetrized(lik.gain * prior.cov * lik.gain.transpose() + lik.noise_cov);
  return out;
}

Gaussian posterior_update(const Gaussian& prior, const LinearGaussian& lik, const Vector& obs) {
  const Gaussian predicted = marginal_likelihood(prior, lik);
  if (obs.size() != predicted.mean.size())
    fail(ErrorKind::DimensionMismatch, "observation " + dims(obs.size(), predicted.mean.size()));

  const CholeskyFactor innovation(predicted.cov);
  // K = cov * gain^T * S^{-1}, obtained from S K^T = gain * cov.
  const Matrix cross = lik.gain * prior.cov;
  const Matrix gain_k = innovation.solve(cross).transpose();

  Gaussian post;
  post.mean = prior.mean + gain_k * (obs - predicted.mean);
  // Joseph form keeps the result symmetric positive semi-definite.
  const Eigen::Index d = prior.mean.size();
  const Matrix reduce = Matrix::Identity(d, d) - gain_k * lik.gain;
  post.cov = symmetrized(reduce * prior.cov * reduce.transpose() + gain_k * lik.noise_cov * gain_k.transpose());
  return post;
}

Vector sample_one(const Gaussian& g, std::mt19937_64& rng) {
  const CholeskyFactor f(g.cov);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(g.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return g.mean + f.llt().matrixL() * z;
}

std::vector<Vector> sample(const Gaussian& g, std::size_t n, std::uint64_t seed) {
  if (g.cov.rows() != g.mean.size()) fail(ErrorKind::DimensionMismatch, "covariance " + dims(g.cov.rows(), g.mean.size()));
  const CholeskyFactor f(g.cov);
  const Matrix lower = f.lower();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(n);
  Vector z(g.mean.size());
  for (std::size_t k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    out.push_back(g.mean + lower * z);
  }
  return out;
}

Gaussian mixture_collapse(const WeightedGaussianMixture& m) {
  m.validate();
  const auto d = m.components.front().dim();
  Vector w(m.log_weights.size());
  kernels::exp_shifted({m.log_weights.data(), static_cast<std::size_t>(w.size())}, 0.0, {w.data(), static_cast<std::size_t>(w.size())});
  w /= w.sum();

  Gaussian out{Vector::Zero(d), Matrix::Zero(d, d)};
  for (std::size_t k = 0; k < m.components.size(); ++k) out.mean += w[k] * m.components[k].mean;
  for (std::size_t k = 0; k < m.components.size(); ++k) {
    const Vector diff = m.components[k].mean - out.mean;
    out.cov += w[k] * (m.components[k].cov + diff * diff.transpose());
  }
  out.cov = symmetrized(out.cov);
  return out;
}

double logsumexp(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::EmptyInput, "logsumexp of an empty vector");
  if (values.size() == 1) return values.front();
  const double m = kernels::max_value(values);
  if (!std::isfinite(m)) return m;
  return m + std::log(kernels::sum_exp_shifted(values, m));
}

Matrix floor_eigenvalues(const Matrix& cov, double floor) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(cov));
  if (eig.info() != Eigen::Success) fail(ErrorKind::NotPositiveDefinite, "eigen-decomposition failed");
  if (eig.eigenvalues().minCoeff() >= floor) return symmetrized(cov);
  const Vector clamped = eig.eigenvalues().cwiseMax(floor);
  return symmetrized(eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose());
}

}  // namespace hpm
