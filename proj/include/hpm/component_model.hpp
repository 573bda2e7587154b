#pragma once

// Latent-state mixture for one facial component: a prior over K hidden
// states, a state-conditioned Gaussian over the true coordinates and a
// state-conditioned linear-Gaussian measurement model.

#include <cstdint>
#include <string>
#include <vector>

#include "hpm/gauss.hpp"

namespace hpm {

struct ComponentMixture {
  Vector log_prior;                       // K, normalized
  std::vector<Gaussian> shape;            // K, over 2m true coordinates
  std::vector<LinearGaussian> measurement;  // K, 2m -> 2m

  int num_states() const { return static_cast<int>(shape.size()); }
  int dim() const { return shape.empty() ? 0 : static_cast<int>(shape.front().dim()); }
  void validate() const;

  friend bool operator==(const ComponentMixture& a, const ComponentMixture& b);
};

// Factorizations of every per-state density, built once per model.
class PreparedComponent {
 public:
  explicit PreparedComponent(const ComponentMixture& cm);

  const ComponentMixture& model() const { return *cm_; }
  int num_states() const { return cm_->num_states(); }
  int dim() const { return cm_->dim(); }

  // ln P(x | z) + ln P(xm | x, z) for every z.
  Vector state_log_likelihoods(const Vector& x, const Vector& xm) const;
  // ln int P(xm | x, z) P(x | z) dx for every z.
  Vector state_evidence(const Vector& xm) const;

 private:
  const ComponentMixture* cm_;
  std::vector<PreparedGaussian> shape_;
  std::vector<PreparedGaussian> noise_;     // zero-mean N(0, Q_z)
  std::vector<PreparedGaussian> evidence_;  // N(b0 + B mu, B S B^T + Q)
};

double joint_log_density(const ComponentMixture& cm, const Vector& x, const Vector& xm);
// log P(z | x, xm) for the component on its own (prior = log_prior).
Vector responsibilities(const ComponentMixture& cm, const Vector& x, const Vector& xm);
Vector state_evidence(const ComponentMixture& cm, const Vector& xm);
Gaussian posterior_given_state(const ComponentMixture& cm, const Vector& xm, int z);
std::vector<Vector> sample_state_shapes(const ComponentMixture& cm, int z, std::size_t n, std::uint64_t seed);

// ---- Parameter estimation ------------------------------------------------

struct ComponentFitOptions {
  bool beta_tied = true;         // gain = I, offset = 0, learn noise only
  double covariance_floor = 1e-6;  // eigenvalue floor on shape and noise
  double min_responsibility = 1e-6;
};

// Weighted observations for one component: rows are samples.
struct ComponentData {
  Matrix truth;        // N x d
  Matrix measurement;  // N x d
};

struct ComponentFitResult {
  ComponentMixture mixture;
  std::vector<std::string> warnings;  // DegenerateState notices
};

// Closed-form weighted maximum-likelihood update of every state's shape and
// measurement parameters. `weights` is N x K (responsibilities). States whose
// total weight is below min_responsibility keep `previous` parameters.
// log_prior is set from the normalized total weights.
ComponentFitResult fit_component(const ComponentData& data, const Matrix& weights, const ComponentFitOptions& options,
                                 const ComponentMixture* previous = nullptr);

// Number of free continuous parameters per state.
std::size_t continuous_parameters_per_state(int dim, bool beta_tied);

}  // namespace hpm
