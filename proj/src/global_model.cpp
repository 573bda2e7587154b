#include "hpm/global_model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hpm/error.hpp"
#include "hpm/kernels.hpp"

namespace hpm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<int> cards_of(const HierarchicalModel& m) {
  std::vector<int> cards{static_cast<int>(m.expression_labels.size()), static_cast<int>(m.pose_labels.size())};
  for (Component c : kComponents) cards.push_back(m.num_states(c));
  return cards;
}

std::vector<int> state_cards_of(const HierarchicalModel& m) {
  std::vector<int> cards;
  for (Component c : kComponents) cards.push_back(m.num_states(c));
  return cards;
}

void normalize_in_place(std::vector<double>& table) {
  const double norm = logsumexp(table);
  for (double& t : table) t -= norm;
}

}  // namespace

const std::vector<std::string>& global_node_names() {
  static const std::vector<std::string> names{"E", "P", "Z_eyebrow", "Z_eye", "Z_nose", "Z_mouth"};
  return names;
}

void HierarchicalModel::validate() const {
  if (network.num_nodes() != kNumGlobalNodes)
    fail(ErrorKind::DimensionMismatch, "network must have " + std::to_string(kNumGlobalNodes) + " nodes");
  network.validate();
  const std::vector<int> cards = cards_of(*this);
  for (int v = 0; v < kNumGlobalNodes; ++v)
    if (network.cardinality(v) != cards[v])
      fail(ErrorKind::CardinalityMismatch, "node " + network.name(v) + " has cardinality " +
                                               std::to_string(network.cardinality(v)) + ", expected " +
                                               std::to_string(cards[v]));
  normalization.validate();
  for (Component c : kComponents) {
    const auto& cm = component(c);
    cm.validate();
    if (cm.dim() != partition.dim(c))
      fail(ErrorKind::DimensionMismatch, "component " + std::string(to_string(c)) + " has dimension " +
                                             std::to_string(cm.dim()) + ", partition expects " +
                                             std::to_string(partition.dim(c)));
  }
}

void check_compatible(const HierarchicalModel& model, const Dataset& dataset) {
  if (model.expression_labels.size() != dataset.expression_labels.size())
    fail(ErrorKind::CardinalityMismatch, "model has " + std::to_string(model.expression_labels.size()) +
                                             " expressions, dataset has " +
                                             std::to_string(dataset.expression_labels.size()));
  if (model.pose_labels.size() != dataset.pose_labels.size())
    fail(ErrorKind::CardinalityMismatch, "model has " + std::to_string(model.pose_labels.size()) +
                                             " poses, dataset has " + std::to_string(dataset.pose_labels.size()));
  if (!(model.partition == dataset.partition))
    fail(ErrorKind::DimensionMismatch, "model and dataset use different component partitions");
}

DiscretePosterior::DiscretePosterior(std::vector<int> cards, std::vector<double> log_table)
    : space_(std::move(cards)), log_table_(std::move(log_table)) {
  if (log_table_.size() != space_.size()) fail(ErrorKind::DimensionMismatch, "posterior table size");
}

Vector DiscretePosterior::marginal(int node) const {
  if (node < 0 || node >= space_.num_nodes()) fail(ErrorKind::IndexOutOfRange, "node " + std::to_string(node));
  std::vector<double> probs(log_table_.size());
  kernels::exp_shifted(log_table_, 0.0, probs);
  Vector out = Vector::Zero(space_.cardinality(node));
  // Sum over contiguous runs sharing a digit.
  const std::size_t stride = space_.stride(node);
  const int card = space_.cardinality(node);
  for (std::size_t base = 0; base < probs.size(); base += stride * card)
    for (int k = 0; k < card; ++k)
      for (std::size_t i = 0; i < stride; ++i) out[k] += probs[base + k * stride + i];
  return out / out.sum();
}

Vector DiscretePosterior::log_marginal(int node) const {
  if (node < 0 || node >= space_.num_nodes()) fail(ErrorKind::IndexOutOfRange, "node " + std::to_string(node));
  const std::size_t stride = space_.stride(node);
  const int card = space_.cardinality(node);
  std::vector<std::vector<double>> groups(card);
  for (std::size_t base = 0; base < log_table_.size(); base += stride * card)
    for (int k = 0; k < card; ++k)
      groups[k].insert(groups[k].end(), log_table_.begin() + static_cast<std::ptrdiff_t>(base + k * stride),
                       log_table_.begin() + static_cast<std::ptrdiff_t>(base + (k + 1) * stride));
  Vector out(card);
  for (int k = 0; k < card; ++k) out[k] = logsumexp(groups[k]);
  out.array() -= logsumexp({out.data(), static_cast<std::size_t>(card)});
  return out;
}

Matrix DiscretePosterior::joint_marginal(int a, int b) const {
  Matrix out = Matrix::Zero(space_.cardinality(a), space_.cardinality(b));
  std::vector<double> probs(log_table_.size());
  kernels::exp_shifted(log_table_, 0.0, probs);
  for (std::size_t idx = 0; idx < probs.size(); ++idx) out(space_.digit(idx, a), space_.digit(idx, b)) += probs[idx];
  return out / out.sum();
}

std::string_view to_string(EstimatePolicy p) noexcept {
  return p == EstimatePolicy::PosteriorMean ? "posterior-mean" : "max-weight-mean";
}

EstimatePolicy estimate_policy_from_string(std::string_view s) {
  if (s == "posterior-mean" || s == "mean") return EstimatePolicy::PosteriorMean;
  if (s == "max-weight-mean" || s == "mode") return EstimatePolicy::MaxWeightMean;
  fail(ErrorKind::InvalidArgument, "unknown estimate policy '" + std::string(s) + "'");
}

InferenceEngine::InferenceEngine(const HierarchicalModel& model)
    : model_(&model), space_(cards_of(model)), zspace_(state_cards_of(model)) {
  model.validate();
  log_joint_ = discrete_log_joint_table(model.network);
  prepared_.reserve(kNumComponents);
  for (Component c : kComponents) prepared_.emplace_back(model.component(c));
}

void InferenceEngine::check_clamp(const Clamp& clamp) const {
  if (clamp.expression && (*clamp.expression < 0 || *clamp.expression >= space_.cardinality(kNodeExpression)))
    fail(ErrorKind::IndexOutOfRange, "clamped expression " + std::to_string(*clamp.expression));
  if (clamp.pose && (*clamp.pose < 0 || *clamp.pose >= space_.cardinality(kNodePose)))
    fail(ErrorKind::IndexOutOfRange, "clamped pose " + std::to_string(*clamp.pose));
}

// Outer sum over the hidden-state space: t[z_eb, z_e, z_n, z_m] = sum_i v_i[z_i].
std::vector<double> InferenceEngine::state_table(const std::array<Vector, kNumComponents>& per_component) const {
  std::vector<double> table{0.0};
  for (const Vector& v : per_component) {
    const auto k = static_cast<std::size_t>(v.size());
    std::vector<double> next(table.size() * k);
    for (std::size_t a = 0; a < table.size(); ++a)
      for (std::size_t b = 0; b < k; ++b) next[a * k + b] = table[a] + v[static_cast<Eigen::Index>(b)];
    table = std::move(next);
  }
  return table;
}

std::vector<double> InferenceEngine::unnormalized_config_table(const LandmarkSet& xm, const Clamp& clamp) const {
  check_clamp(clamp);
  std::array<Vector, kNumComponents> evidence;
  for (Component c : kComponents)
    evidence[index_of(c)] = prepared(c).state_evidence(model_->partition.extract(xm.coords(), c));
  const std::vector<double> zev = state_table(evidence);

  std::vector<double> table(space_.size(), kNegInf);
  const int ne = space_.cardinality(kNodeExpression);
  const int np = space_.cardinality(kNodePose);
  const std::size_t block = zspace_.size();
  for (int e = 0; e < ne; ++e) {
    if (clamp.expression && *clamp.expression != e) continue;
    for (int p = 0; p < np; ++p) {
      if (clamp.pose && *clamp.pose != p) continue;
      const std::size_t offset = (static_cast<std::size_t>(e) * np + p) * block;
      std::copy_n(log_joint_.begin() + static_cast<std::ptrdiff_t>(offset), block,
                  table.begin() + static_cast<std::ptrdiff_t>(offset));
      kernels::add_inplace({table.data() + offset, block}, zev);
    }
  }
  return table;
}

DiscretePosterior InferenceEngine::posterior_over_configs(const LandmarkSet& xm, const Clamp& clamp) const {
  std::vector<double> table = unnormalized_config_table(xm, clamp);
  normalize_in_place(table);
  return DiscretePosterior(space_.cardinalities(), std::move(table));
}

double InferenceEngine::log_evidence(const LandmarkSet& xm, const Clamp& clamp) const {
  return logsumexp(unnormalized_config_table(xm, clamp));
}

InferenceResult InferenceEngine::infer(const LandmarkSet& xm, EstimatePolicy policy, const Clamp& clamp) const {
  std::vector<double> table = unnormalized_config_table(xm, clamp);
  const double evidence = logsumexp(table);
  for (double& t : table) t -= evidence;
  DiscretePosterior discrete(space_.cardinalities(), std::move(table));

  std::array<WeightedGaussianMixture, kNumComponents> mixtures;
  Vector estimate = Vector::Zero(kNumCoords);
  for (Component c : kComponents) {
    const ComponentMixture& cm = model_->component(c);
    const Vector xm_c = model_->partition.extract(xm.coords(), c);
    WeightedGaussianMixture& mix = mixtures[index_of(c)];
    mix.log_weights = discrete.log_marginal(z_node(c));
    mix.components.reserve(cm.num_states());
    for (int z = 0; z < cm.num_states(); ++z) mix.components.push_back(posterior_update(cm.shape[z], cm.measurement[z], xm_c));

    Vector part;
    if (policy == EstimatePolicy::PosteriorMean) {
      part = mixture_collapse(mix).mean;
    } else {
      Eigen::Index best = 0;
      mix.log_weights.maxCoeff(&best);
      part = mix.components[best].mean;
    }
    model_->partition.scatter(part, c, estimate);
  }
  return {LandmarkSet(std::move(estimate)), std::move(mixtures), std::move(discrete), evidence};
}

double InferenceEngine::complete_log_likelihood(const AnnotatedSample& s) const {
  double norm = 0.0;
  state_posterior(s, &norm);
  return norm;
}

DiscretePosterior InferenceEngine::state_posterior(const AnnotatedSample& s, double* log_norm) const {
  check_clamp({s.expression, s.pose});
  std::array<Vector, kNumComponents> lik;
  for (Component c : kComponents)
    lik[index_of(c)] = prepared(c).state_log_likelihoods(model_->partition.extract(s.truth.coords(), c),
                                                         model_->partition.extract(s.measurement.coords(), c));
  std::vector<double> table = state_table(lik);
  const std::size_t block = zspace_.size();
  const std::size_t offset =
      (static_cast<std::size_t>(s.expression) * space_.cardinality(kNodePose) + static_cast<std::size_t>(s.pose)) * block;
  kernels::add_inplace(table, {log_joint_.data() + offset, block});
  const double norm = logsumexp(table);
  for (double& t : table) t -= norm;
  if (log_norm) *log_norm = norm;
  return DiscretePosterior(zspace_.cardinalities(), std::move(table));
}

DiscretePosterior posterior_over_configs(const HierarchicalModel& model, const LandmarkSet& xm, const Clamp& clamp) {
  return InferenceEngine(model).posterior_over_configs(xm, clamp);
}

InferenceResult infer_landmarks(const HierarchicalModel& model, const LandmarkSet& xm, EstimatePolicy policy) {
  return InferenceEngine(model).infer(xm, policy);
}

double log_evidence(const HierarchicalModel& model, const LandmarkSet& xm, const Clamp& clamp) {
  return InferenceEngine(model).log_evidence(xm, clamp);
}

double complete_log_likelihood(const HierarchicalModel& model, const AnnotatedSample& s) {
  return InferenceEngine(model).complete_log_likelihood(s);
}

Vector query_state_given_label(const HierarchicalModel& model, int node, const Clamp& clamp) {
  Evidence ev(kNumGlobalNodes);
  ev[kNodeExpression] = clamp.expression;
  ev[kNodePose] = clamp.pose;
  const std::vector<double> p = conditional_marginal(model.network, node, ev);
  return Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
}

Matrix query_joint_states(const HierarchicalModel& model, int a, int b) {
  const std::vector<double> p = conditional_joint(model.network, a, b, Evidence(kNumGlobalNodes));
  const int cb = model.network.cardinality(b);
  Matrix out(model.network.cardinality(a), cb);
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < cb; ++j) out(i, j) = p[static_cast<std::size_t>(i * cb + j)];
  return out;
}

}  // namespace hpm
