#include "hpm/component_model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hpm/error.hpp"
#include "hpm/kernels.hpp"

namespace hpm {
namespace {

void check_state(const ComponentMixture& cm, int z) {
  if (z < 0 || z >= cm.num_states())
    fail(ErrorKind::IndexOutOfRange, "state " + std::to_string(z) + " outside [0, " + std::to_string(cm.num_states()) + ")");
}

void check_dim(const ComponentMixture& cm, const Vector& v, const char* what) {
  if (v.size() != cm.dim())
    fail(ErrorKind::DimensionMismatch, std::string(what) + " has " + std::to_string(v.size()) + " values, component has " +
                                           std::to_string(cm.dim()));
}


}  // namespace

void ComponentMixture::validate() const {
  const int k = num_states();
  if (k < 1) fail(ErrorKind::InvalidArgument, "component needs at least one state");
  if (log_prior.size() != k || static_cast<int>(measurement.size()) != k)
    fail(ErrorKind::DimensionMismatch, "component state lists disagree on K");
  const double lse = logsumexp({log_prior.data(), static_cast<std::size_t>(k)});
  if (std::abs(lse) > 1e-10) fail(ErrorKind::InvalidArgument, "component log_prior is not normalized");
  const int d = dim();
  for (int z = 0; z < k; ++z) {
    if (shape[z].dim() != d) fail(ErrorKind::DimensionMismatch, "shape state " + std::to_string(z) + " dimension");
    shape[z].validate();
    const auto& m = measurement[z];
    if (m.dim_in() != d || m.dim_out() != d)
      fail(ErrorKind::DimensionMismatch, "measurement state " + std::to_string(z) + " must map " + std::to_string(d) +
                                             " -> " + std::to_string(d));
    m.validate();
  }
}

bool operator==(const ComponentMixture& a, const ComponentMixture& b) {
  if (a.num_states() != b.num_states() || a.log_prior != b.log_prior) return false;
  for (int z = 0; z < a.num_states(); ++z) {
    if (a.shape[z].mean != b.shape[z].mean || a.shape[z].cov != b.shape[z].cov) return false;
    const auto& ma = a.measurement[z];
    const auto& mb = b.measurement[z];
    if (ma.offset != mb.offset || ma.gain != mb.gain || ma.noise_cov != mb.noise_cov) return false;
  }
  return true;
}

PreparedComponent::PreparedComponent(const ComponentMixture& cm) : cm_(&cm) {
  const int k = cm.num_states();
  shape_.reserve(k);
  noise_.reserve(k);
  evidence_.reserve(k);
  for (int z = 0; z < k; ++z) {
    shape_.emplace_back(cm.shape[z]);
    noise_.emplace_back(Gaussian{Vector::Zero(cm.measurement[z].dim_out()), cm.measurement[z].noise_cov});
    evidence_.emplace_back(marginal_likelihood(cm.shape[z], cm.measurement[z]));
  }
}

Vector PreparedComponent::state_log_likelihoods(const Vector& x, const Vector& xm) const {
  check_dim(*cm_, x, "true coordinates");
  check_dim(*cm_, xm, "measurement");
  const int k = num_states();
  Vector out(k);
  for (int z = 0; z < k; ++z) {
    const auto& m = cm_->measurement[z];
    out[z] = shape_[z].log_density(x) + noise_[z].log_density(xm - m.offset - m.gain * x);
  }
  return out;
}

Vector PreparedComponent::state_evidence(const Vector& xm) const {
  check_dim(*cm_, xm, "measurement");
  const int k = num_states();
  Vector out(k);
  for (int z = 0; z < k; ++z) out[z] = evidence_[z].log_density(xm);
  return out;
}

double joint_log_density(const ComponentMixture& cm, const Vector& x, const Vector& xm) {
  const PreparedComponent pc(cm);
  const Vector terms = cm.log_prior + pc.state_log_likelihoods(x, xm);
  return logsumexp({terms.data(), static_cast<std::size_t>(terms.size())});
}

Vector responsibilities(const ComponentMixture& cm, const Vector& x, const Vector& xm) {
  const PreparedComponent pc(cm);
  Vector terms = cm.log_prior + pc.state_log_likelihoods(x, xm);
  const double norm = logsumexp({terms.data(), static_cast<std::size_t>(terms.size())});
  terms.array() -= norm;
  return terms;
}

Vector state_evidence(const ComponentMixture& cm, const Vector& xm) { return PreparedComponent(cm).state_evidence(xm); }

Gaussian posterior_given_state(const ComponentMixture& cm, const Vector& xm, int z) {
  check_state(cm, z);
  check_dim(cm, xm, "measurement");
  return posterior_update(cm.shape[z], cm.measurement[z], xm);
}

std::vector<Vector> sample_state_shapes(const ComponentMixture& cm, int z, std::size_t n, std::uint64_t seed) {
  check_state(cm, z);
  return sample(cm.shape[z], n, seed);
}

std::size_t continuous_parameters_per_state(int dim, bool beta_tied) {
  const auto d = static_cast<std::size_t>(dim);
  const std::size_t sym = d * (d + 1) / 2;
  const std::size_t shape = d + sym;
  const std::size_t meas = beta_tied ? sym : d + d * d + sym;
  return shape + meas;
}

ComponentFitResult fit_component(const ComponentData& data, const Matrix& weights, const ComponentFitOptions& options,
                                 const ComponentMixture* previous) {
  const Eigen::Index n = data.truth.rows();
  const Eigen::Index d = data.truth.cols();
  const Eigen::Index k = weights.cols();
  if (data.measurement.rows() != n || data.measurement.cols() != d || weights.rows() != n)
    fail(ErrorKind::DimensionMismatch, "component fit inputs disagree on shape");
  if (k < 1) fail(ErrorKind::InvalidArgument, "component fit needs at least one state");
  if (previous && (previous->num_states() != k || previous->dim() != d))
    fail(ErrorKind::DimensionMismatch, "previous component parameters have a different shape");

  ComponentFitResult result;
  ComponentMixture& cm = result.mixture;
  cm.shape.resize(k);
  cm.measurement.resize(k);
  Vector totals(k);

  // Row-major copies so each sample's coordinates are contiguous for the kernels.
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMatrix xs = data.truth;
  const RowMatrix xms = data.measurement;
  const auto row = [d](const RowMatrix& m, Eigen::Index j) {
    return std::span<const double>(m.data() + j * d, static_cast<std::size_t>(d));
  };

  for (Eigen::Index z = 0; z < k; ++z) {
    const auto w = weights.col(z);
    const double total = w.sum();
    totals[z] = total;
    if (!(total >= options.min_responsibility)) {
      if (!previous)
        fail(ErrorKind::DegenerateState, "state " + std::to_string(z) + " has no responsibility and no previous value");
      cm.shape[z] = previous->shape[z];
      cm.measurement[z] = previous->measurement[z];
      result.warnings.push_back("DegenerateState: state " + std::to_string(z) + " total responsibility " +
                                std::to_string(total) + "; parameters kept");
      continue;
    }

    Vector mean_acc = Vector::Zero(d);
    for (Eigen::Index j = 0; j < n; ++j)
      if (w[j] != 0.0) kernels::axpy(w[j], row(xs, j), {mean_acc.data(), static_cast<std::size_t>(d)});
    const Vector mean = mean_acc / total;

    const Matrix centered = data.truth.rowwise() - mean.transpose();
    Matrix cov = (centered.transpose() * w.asDiagonal() * centered) / total;
    cm.shape[z] = {mean, floor_eigenvalues(cov, options.covariance_floor)};

    LinearGaussian meas;
    if (options.beta_tied) {
      const Matrix resid = data.measurement - data.truth;
      meas.offset = Vector::Zero(d);
      meas.gain = Matrix::Identity(d, d);
      meas.noise_cov = (resid.transpose() * w.asDiagonal() * resid) / total;
    } else {
      // Weighted least squares of xm on [1, x].
      Matrix design(n, d + 1);
      design.col(0).setOnes();
      design.rightCols(d) = data.truth;
      const Matrix normal = design.transpose() * w.asDiagonal() * design;
      const Matrix rhs = design.transpose() * w.asDiagonal() * data.measurement;
      const CholeskyFactor f(0.5 * (normal + normal.transpose()));
      const Matrix coef = f.solve(rhs);  // (d+1) x d
      meas.offset = coef.row(0).transpose();
      meas.gain = coef.bottomRows(d).transpose();
      const Matrix resid = data.measurement - design * coef;
      meas.noise_cov = (resid.transpose() * w.asDiagonal() * resid) / total;
    }
    meas.noise_cov = floor_eigenvalues(meas.noise_cov, options.covariance_floor);
    cm.measurement[z] = std::move(meas);
  }

  const double grand = totals.sum();
  cm.log_prior.resize(k);
  for (Eigen::Index z = 0; z < k; ++z) cm.log_prior[z] = std::log(std::max(totals[z] / grand, 1e-12));
  const double lse = logsumexp({cm.log_prior.data(), static_cast<std::size_t>(k)});
  cm.log_prior.array() -= lse;
  return result;
}

}  // namespace hpm
