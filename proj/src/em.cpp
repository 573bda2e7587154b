#include <cmath>
#include <string>

#include "hpm/error.hpp"
#include "hpm/kernels.hpp"
#include "hpm/learning.hpp"
#include "learning_detail.hpp"

namespace hpm {
namespace {

std::vector<int> all_cards(const Dataset& d, const std::array<int, kNumComponents>& states) {
  std::vector<int> cards{d.num_expressions(), d.num_poses()};
  cards.insert(cards.end(), states.begin(), states.end());
  return cards;
}

std::vector<int> all_cards(const HierarchicalModel& m) { return m.network.cardinalities(); }

// Counts of (parent row, node value) marginalized from a full table.
std::vector<double> family_counts(const std::vector<double>& table, const ConfigSpace& space, int node, ParentMask parents) {
  std::vector<int> plist;
  std::size_t rows = 1;
  for (int u = 0; u < space.num_nodes(); ++u)
    if (parents & (1u << u)) {
      plist.push_back(u);
      rows *= static_cast<std::size_t>(space.cardinality(u));
    }
  const int card = space.cardinality(node);
  std::vector<double> counts(rows * card, 0.0);
  for (std::size_t idx = 0; idx < table.size(); ++idx) {
    if (table[idx] == 0.0) continue;
    std::size_t r = 0;
    for (int u : plist) r = r * space.cardinality(u) + space.digit(idx, u);
    counts[r * card + space.digit(idx, node)] += table[idx];
  }
  return counts;
}

std::uint64_t component_seed(std::uint64_t seed, Component c) {
  return seed + 0x9E3779B97F4A7C15ULL * (index_of(c) + 1);
}

}  // namespace

namespace detail {
std::vector<double> family_counts_of(const std::vector<double>& table, const ConfigSpace& space, int node,
                                     ParentMask parents) {
  return family_counts(table, space, node, parents);
}
}  // namespace detail

std::string_view to_string(StructurePreset p) noexcept {
  switch (p) {
    case StructurePreset::Default: return "default";
    case StructurePreset::Permissive: return "permissive";
    case StructurePreset::Empty: return "empty";
  }
  return "?";
}

StructurePreset structure_preset_from_string(std::string_view s) {
  if (s == "default") return StructurePreset::Default;
  if (s == "permissive") return StructurePreset::Permissive;
  if (s == "empty") return StructurePreset::Empty;
  fail(ErrorKind::InvalidArgument, "unknown structure preset '" + std::string(s) + "'");
}

StructureConstraints StructureConstraints::preset(StructurePreset p, int num_nodes) {
  StructureConstraints c;
  const ParentMask all = num_nodes >= 32 ? ~0u : ((1u << num_nodes) - 1);
  c.forbidden.assign(num_nodes, 0);
  for (int v = 0; v < num_nodes; ++v) {
    switch (p) {
      case StructurePreset::Permissive: c.forbidden[v] = 0; break;
      case StructurePreset::Empty: c.forbidden[v] = all; break;
      case StructurePreset::Default:
        // label nodes (0, 1) only accept each other as parents
        c.forbidden[v] = (v == kNodeExpression || v == kNodePose) ? (all & ~0b11u) : 0u;
        break;
    }
  }
  return c;
}

void LearnConfig::validate() const {
  for (const auto& r : state_ranges)
    if (r.min < 1 || r.max < r.min) fail(ErrorKind::InvalidArgument, "state count range must satisfy 1 <= min <= max");
  for (int k : num_states)
    if (k < 1) fail(ErrorKind::InvalidArgument, "state counts must be positive");
  if (max_param_em_iters < 1 || max_structure_iters < 1 || kmeans_restarts < 1 || kmeans_max_iters < 1)
    fail(ErrorKind::InvalidArgument, "iteration limits must be positive");
  if (!(param_em_rel_tol > 0.0) || !(monotonicity_slack >= 0.0) || !(cpt_pseudocount > 0.0) ||
      !(covariance_floor > 0.0))
    fail(ErrorKind::InvalidArgument, "tolerances must be positive");
}

std::array<ComponentData, kNumComponents> component_data(const Dataset& dataset) {
  std::array<ComponentData, kNumComponents> out;
  const auto n = static_cast<Eigen::Index>(dataset.size());
  for (Component c : kComponents) {
    const int d = dataset.partition.dim(c);
    ComponentData& cd = out[index_of(c)];
    cd.truth.resize(n, d);
    cd.measurement.resize(n, d);
    for (Eigen::Index j = 0; j < n; ++j) {
      cd.truth.row(j) = dataset.partition.extract(dataset.samples[j].truth.coords(), c).transpose();
      cd.measurement.row(j) = dataset.partition.extract(dataset.samples[j].measurement.coords(), c).transpose();
    }
  }
  return out;
}

DiscreteNetwork fit_network(const std::vector<double>& expected_counts, const std::vector<int>& cards,
                            const std::vector<ParentMask>& parents, double pseudocount) {
  const ConfigSpace space(cards);
  if (expected_counts.size() != space.size()) fail(ErrorKind::DimensionMismatch, "expected-count table size");
  std::vector<std::vector<double>> cpts;
  for (int v = 0; v < space.num_nodes(); ++v) {
    std::vector<double> counts = family_counts(expected_counts, space, v, parents[v]);
    const int card = cards[v];
    for (std::size_t r = 0; r * card < counts.size(); ++r) {
      double total = 0.0;
      for (int k = 0; k < card; ++k) total += counts[r * card + k];
      for (int k = 0; k < card; ++k) counts[r * card + k] = (counts[r * card + k] + pseudocount) / (total + card * pseudocount);
      // Renormalize so rounding cannot push the row sum past the 1e-10 check.
      double s = 0.0;
      for (int k = 0; k < card; ++k) s += counts[r * card + k];
      for (int k = 0; k < card; ++k) counts[r * card + k] /= s;
    }
    cpts.push_back(std::move(counts));
  }
  std::vector<std::string> names;
  if (space.num_nodes() == kNumGlobalNodes)
    names = global_node_names();
  else
    for (int v = 0; v < space.num_nodes(); ++v) names.push_back("X" + std::to_string(v));
  return DiscreteNetwork(std::move(names), cards, parents, std::move(cpts));
}

InitResult init_states(const Dataset& dataset, const LearnConfig& config) {
  config.validate();
  dataset.validate();
  const auto data = component_data(dataset);
  const auto n = static_cast<Eigen::Index>(dataset.size());

  InitResult out;
  HierarchicalModel& m = out.model;
  m.partition = dataset.partition;
  m.normalization = dataset.normalization;
  m.expression_labels = dataset.expression_labels;
  m.pose_labels = dataset.pose_labels;
  m.metadata.provenance = "structure-em";
  m.metadata.seed = config.seed;

  for (Component c : kComponents) {
    const int k = config.num_states[index_of(c)];
    if (n < k)
      fail(ErrorKind::TooFewSamples, std::to_string(n) + " samples for " + std::to_string(k) + " states of " +
                                         std::string(to_string(c)));
    KMeansResult km = kmeans(data[index_of(c)].truth, k, config.kmeans_restarts, component_seed(config.seed, c),
                             config.kmeans_max_iters);
    Matrix w = Matrix::Zero(n, k);
    for (Eigen::Index j = 0; j < n; ++j) w(j, km.assignment[j]) = 1.0;
    m.components[index_of(c)] = fit_component(data[index_of(c)], w, config.fit_options()).mixture;
    out.assignments[index_of(c)] = std::move(km.assignment);
  }

  const std::vector<int> cards = all_cards(dataset, config.num_states);
  const ConfigSpace space(cards);
  std::vector<double> counts(space.size(), 0.0);
  std::vector<int> config_values(kNumGlobalNodes);
  for (Eigen::Index j = 0; j < n; ++j) {
    config_values[kNodeExpression] = dataset.samples[j].expression;
    config_values[kNodePose] = dataset.samples[j].pose;
    for (Component c : kComponents) config_values[z_node(c)] = out.assignments[index_of(c)][j];
    counts[space.index(config_values)] += 1.0;
  }
  m.network = fit_network(counts, cards, std::vector<ParentMask>(kNumGlobalNodes, 0), config.cpt_pseudocount);
  m.validate();
  return out;
}

Expectations e_step(const HierarchicalModel& model, const Dataset& dataset) {
  check_compatible(model, dataset);
  const InferenceEngine engine(model);
  const std::size_t n = dataset.size();
  const ConfigSpace& zspace = engine.state_space();
  const std::size_t block = zspace.size();
  const int np = dataset.num_poses();

  Expectations ex;
  ex.n = n;
  ex.expected_counts.assign(engine.space().size(), 0.0);
  ex.posteriors.reserve(n);
  for (Component c : kComponents) ex.responsibilities[index_of(c)] = Matrix::Zero(static_cast<Eigen::Index>(n), model.num_states(c));

  std::vector<double> probs(block);
  for (std::size_t j = 0; j < n; ++j) {
    const AnnotatedSample& s = dataset.samples[j];
    double norm = 0.0;
    DiscretePosterior post = engine.state_posterior(s, &norm);
    ex.log_likelihood += norm;
    kernels::exp_shifted(post.log_table(), 0.0, probs);
    const std::size_t offset = (static_cast<std::size_t>(s.expression) * np + static_cast<std::size_t>(s.pose)) * block;
    kernels::add_inplace({ex.expected_counts.data() + offset, block}, probs);
    for (std::size_t idx = 0; idx < block; ++idx)
      for (Component c : kComponents) {
        const int v = static_cast<int>(index_of(c));
        ex.responsibilities[index_of(c)](static_cast<Eigen::Index>(j), zspace.digit(idx, v)) += probs[idx];
      }
    ex.posteriors.push_back(std::move(post));
  }
  return ex;
}

MStepResult m_step(const Dataset& dataset, const Expectations& ex, const std::vector<ParentMask>& structure,
                   const LearnConfig& config, const HierarchicalModel& previous) {
  check_compatible(previous, dataset);
  if (ex.n != dataset.size()) fail(ErrorKind::DimensionMismatch, "expectations and dataset disagree on size");
  if (structure.size() != static_cast<std::size_t>(kNumGlobalNodes))
    fail(ErrorKind::DimensionMismatch, "structure must list parents for every node");

  MStepResult out{previous, {}};
  out.model.network = fit_network(ex.expected_counts, all_cards(previous), structure, config.cpt_pseudocount);
  const auto data = component_data(dataset);
  for (Component c : kComponents) {
    ComponentFitResult fit = fit_component(data[index_of(c)], ex.responsibilities[index_of(c)], config.fit_options(),
                                           &previous.component(c));
    for (auto& w : fit.warnings) out.warnings.push_back(std::string(to_string(c)) + ": " + w);
    out.model.components[index_of(c)] = std::move(fit.mixture);
  }
  return out;
}

std::size_t model_dimension(const HierarchicalModel& model, bool beta_tied) {
  std::size_t dim = model.network.num_free_parameters();
  for (Component c : kComponents)
    dim += static_cast<std::size_t>(model.num_states(c)) * continuous_parameters_per_state(model.component(c).dim(), beta_tied);
  return dim;
}

ScoreReport expected_bic(const HierarchicalModel& model, const Dataset& dataset, const Expectations& ex,
                         bool beta_tied) {
  check_compatible(model, dataset);
  const InferenceEngine engine(model);
  const std::vector<double>& log_joint = engine.discrete_log_table();
  if (ex.expected_counts.size() != log_joint.size()) fail(ErrorKind::DimensionMismatch, "expected-count table size");

  double discrete = 0.0;
  for (std::size_t i = 0; i < log_joint.size(); ++i)
    if (ex.expected_counts[i] != 0.0) discrete += ex.expected_counts[i] * log_joint[i];

  double continuous = 0.0;
  for (Component c : kComponents) {
    const PreparedComponent& pc = engine.prepared(c);
    const Matrix& resp = ex.responsibilities[index_of(c)];
    for (std::size_t j = 0; j < dataset.size(); ++j) {
      const auto& s = dataset.samples[j];
      const Vector ll = pc.state_log_likelihoods(dataset.partition.extract(s.truth.coords(), c),
                                                 dataset.partition.extract(s.measurement.coords(), c));
      continuous += resp.row(static_cast<Eigen::Index>(j)).dot(ll);
    }
  }

  ScoreReport r;
  r.n = ex.n;
  r.dim = model_dimension(model, beta_tied);
  r.expected_loglik = discrete + continuous;
  r.penalty = 0.5 * std::log(static_cast<double>(r.n)) * static_cast<double>(r.dim);
  r.expected_bic = r.expected_loglik - r.penalty;
  return r;
}

}  // namespace hpm
