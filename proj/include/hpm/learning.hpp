#pragma once

// Structural EM for the hierarchical model: k-means initialization of the
// hidden states, parameter EM on the expected BIC score, exact global
// structure search over the discrete nodes, and state-count selection.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hpm/global_model.hpp"

namespace hpm {

enum class StructurePreset {
  Default,     // no edges from a Z node into E or P
  Permissive,  // any DAG
  Empty,       // no edges at all
};

std::string_view to_string(StructurePreset p) noexcept;
StructurePreset structure_preset_from_string(std::string_view s);

struct StructureConstraints {
  std::vector<ParentMask> forbidden;  // per child: parents that may not be used

  static StructureConstraints preset(StructurePreset p, int num_nodes = kNumGlobalNodes);
  bool allows(int parent, int child) const { return parent != child && !(forbidden[child] & (1u << parent)); }
  int num_nodes() const { return static_cast<int>(forbidden.size()); }
};

struct StateRange {
  int min = 2;
  int max = 6;
};

struct LearnConfig {
  std::array<StateRange, kNumComponents> state_ranges{};
  std::array<int, kNumComponents> num_states{3, 3, 3, 3};  // used by structure_em
  int max_param_em_iters = 50;
  double param_em_rel_tol = 1e-6;
  int max_structure_iters = 20;
  int kmeans_restarts = 10;
  int kmeans_max_iters = 100;
  std::uint64_t seed = 0;
  StructurePreset structure = StructurePreset::Default;
  bool beta_tied = true;
  double cpt_pseudocount = 1e-3;
  double covariance_floor = 1e-6;
  double monotonicity_slack = 1e-8;  // relative
  bool strict_monotonicity = true;   // throw MonotonicityViolation

  void validate() const;
  ComponentFitOptions fit_options() const { return {beta_tied, covariance_floor, 1e-6}; }
};

struct ScoreReport {
  double expected_bic = 0.0;
  double expected_loglik = 0.0;
  double penalty = 0.0;
  std::size_t dim = 0;
  std::size_t n = 0;
};

// ---- k-means -------------------------------------------------------------

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centers;  // k x d
  double distortion = 0.0;  // sum of squared distances
};

// Lloyd iterations from k-means++ seeds; the lowest-distortion restart wins.
// Empty clusters are refilled with the point of the largest cluster farthest
// from its center.
KMeansResult kmeans(const Matrix& points, int k, int restarts, std::uint64_t seed, int max_iters = 100);

// ---- Parameter EM --------------------------------------------------------

// Per-component true/measured coordinates for the whole dataset.
std::array<ComponentData, kNumComponents> component_data(const Dataset& dataset);

struct InitResult {
  std::array<std::vector<int>, kNumComponents> assignments;
  HierarchicalModel model;  // empty global structure
};

InitResult init_states(const Dataset& dataset, const LearnConfig& config);

struct Expectations {
  std::vector<DiscretePosterior> posteriors;  // per sample, over (Z_eb, Z_e, Z_n, Z_m)
  std::vector<double> expected_counts;        // over all (E, P, Z...) configurations
  std::array<Matrix, kNumComponents> responsibilities;  // N x K_i
  double log_likelihood = 0.0;                // sum_j ln P(e_j, p_j, x_j, xm_j)
  std::size_t n = 0;
};

Expectations e_step(const HierarchicalModel& model, const Dataset& dataset);

struct MStepResult {
  HierarchicalModel model;
  std::vector<std::string> warnings;
};

// Closed-form update of every parameter for the given global structure.
MStepResult m_step(const Dataset& dataset, const Expectations& ex, const std::vector<ParentMask>& structure,
                   const LearnConfig& config, const HierarchicalModel& previous);

// CPTs from expected counts with a pseudocount on every cell.
DiscreteNetwork fit_network(const std::vector<double>& expected_counts, const std::vector<int>& cards,
                            const std::vector<ParentMask>& parents, double pseudocount);

// Free parameters: CPT entries plus every continuous parameter.
std::size_t model_dimension(const HierarchicalModel& model, bool beta_tied);

ScoreReport expected_bic(const HierarchicalModel& model, const Dataset& dataset, const Expectations& ex,
                         bool beta_tied);

// ---- Structure search ----------------------------------------------------

// Expected-count-weighted log likelihood of a node's CPT (pseudocount-smoothed
// maximum likelihood) minus (ln n / 2) (card - 1) * rows.
double family_score(const std::vector<double>& expected_counts, const ConfigSpace& space, int node,
                    ParentMask parents, double n, double pseudocount);

// Sum of family scores computed from the whole table in one pass.
double structure_score(const std::vector<double>& expected_counts, const ConfigSpace& space,
                       const std::vector<ParentMask>& parents, double n, double pseudocount);

// Exact maximizer over all DAGs allowed by `constraints` (at most 8 nodes).
// Among structures scoring within 1e-9 relative of the optimum, the one whose
// sorted (parent, child) edge list is lexicographically smallest is returned.
std::vector<ParentMask> structure_search(const std::vector<double>& expected_counts, const ConfigSpace& space,
                                         double n, const StructureConstraints& constraints, double pseudocount);

// ---- Driver --------------------------------------------------------------

struct TraceRecord {
  int structure_iter = 0;
  int param_iter = -1;     // -1 for init / structure steps
  std::string step;        // "init", "param", "structure"
  std::vector<Edge> edges;
  ScoreReport score;
  double log_likelihood = 0.0;  // observed-data log likelihood of the model the expectations came from
  std::optional<double> retained_bic;  // structure steps: score of the previous structure and parameters
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<TraceRecord> records;
  std::string convergence;
  std::vector<std::string> warnings;

  // Expected BIC never drops by more than slack * |previous| within one inner
  // parameter-EM loop.
  bool param_em_monotone(double slack = 1e-8) const;
};

// One JSON object per line; wall time only when include_timing is set so that
// reruns produce identical bytes.
std::string format_trace(const TrainTrace& trace, const std::vector<std::string>& node_names, bool include_timing = false);
void save_trace(const TrainTrace& trace, const std::vector<std::string>& node_names,
                const std::filesystem::path& path, bool include_timing = false);

struct TrainResult {
  HierarchicalModel model;
  TrainTrace trace;
};

// Throws Error(MonotonicityViolation) under strict_monotonicity; the partial
// trace is available through the exception-safe overload below.
TrainResult structure_em(const Dataset& dataset, const LearnConfig& config);
TrainResult structure_em(const Dataset& dataset, const LearnConfig& config, TrainTrace& trace_out);

// Detached single-component EM from a k-means start.
ComponentMixture fit_detached_component(const ComponentData& data, int k, const LearnConfig& config,
                                        std::uint64_t seed);

// Per component, the K in its range maximizing the validation log evidence
// sum_j ln P(x_j, xm_j) of a detached mixture fit on `train`.
std::array<int, kNumComponents> select_state_counts(const Dataset& train, const Dataset& validation,
                                                    const LearnConfig& config);

}  // namespace hpm
