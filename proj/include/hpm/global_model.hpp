#pragma once

// The full hierarchical model: a discrete network over expression, pose and
// the four component hidden states, joined with one latent-state mixture per
// facial component. Inference marginalizes every discrete variable exactly by
// enumerating the joint configuration table.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hpm/component_model.hpp"
#include "hpm/network.hpp"
#include "hpm/shape_data.hpp"

namespace hpm {

inline constexpr int kNodeExpression = 0;
inline constexpr int kNodePose = 1;
inline constexpr int kNumGlobalNodes = 6;

inline int z_node(Component c) { return 2 + static_cast<int>(index_of(c)); }
const std::vector<std::string>& global_node_names();  // E, P, Z_eyebrow, Z_eye, Z_nose, Z_mouth

struct ModelMetadata {
  std::string provenance;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> notes;

  friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

struct HierarchicalModel {
  DiscreteNetwork network;
  std::array<ComponentMixture, kNumComponents> components;
  ComponentPartition partition;
  NormalizationSpec normalization;
  std::vector<std::string> expression_labels = default_expression_labels();
  std::vector<std::string> pose_labels = default_pose_labels();
  ModelMetadata metadata;

  const ComponentMixture& component(Component c) const { return components[index_of(c)]; }
  int num_states(Component c) const { return component(c).num_states(); }

  // Six-node network whose Z cardinalities match the component mixtures and
  // whose E/P cardinalities match the label lists; component dimensions match
  // the partition.
  void validate() const;

  friend bool operator==(const HierarchicalModel&, const HierarchicalModel&) = default;
};

// Label cardinalities must agree (CardinalityMismatch) and so must the
// partition (DimensionMismatch).
void check_compatible(const HierarchicalModel& model, const Dataset& dataset);

// Optional clamping of the label nodes during inference.
struct Clamp {
  std::optional<int> expression;
  std::optional<int> pose;
};

// Normalized log-probability table over the joint configurations of some
// discrete nodes (ConfigSpace indexing).
class DiscretePosterior {
 public:
  DiscretePosterior(std::vector<int> cards, std::vector<double> log_table);

  const ConfigSpace& space() const { return space_; }
  const std::vector<double>& log_table() const { return log_table_; }
  double log_probability(std::span<const int> config) const { return log_table_[space_.index(config)]; }

  Vector marginal(int node) const;
  Vector log_marginal(int node) const;  // normalized
  Matrix joint_marginal(int a, int b) const;

 private:
  ConfigSpace space_;
  std::vector<double> log_table_;
};

enum class EstimatePolicy {
  PosteriorMean,  // moment-matched mean of each component's posterior mixture
  MaxWeightMean,  // mean of the highest-weight mixture component
};

std::string_view to_string(EstimatePolicy p) noexcept;
EstimatePolicy estimate_policy_from_string(std::string_view s);

struct InferenceResult {
  LandmarkSet estimate;
  std::array<WeightedGaussianMixture, kNumComponents> component_posteriors;
  DiscretePosterior discrete;
  double log_evidence = 0.0;
};

// Caches per-state factorizations and the discrete log-joint table. The model
// must outlive the engine. All methods are const and thread-safe.
class InferenceEngine {
 public:
  explicit InferenceEngine(const HierarchicalModel& model);

  const HierarchicalModel& model() const { return *model_; }
  const ConfigSpace& space() const { return space_; }
  const ConfigSpace& state_space() const { return zspace_; }
  const std::vector<double>& discrete_log_table() const { return log_joint_; }
  const PreparedComponent& prepared(Component c) const { return prepared_[index_of(c)]; }

  // Unnormalized ln P(config) + sum_i ln evidence_i(z_i); excluded configs -inf.
  std::vector<double> unnormalized_config_table(const LandmarkSet& xm, const Clamp& clamp) const;

  DiscretePosterior posterior_over_configs(const LandmarkSet& xm, const Clamp& clamp = {}) const;
  InferenceResult infer(const LandmarkSet& xm, EstimatePolicy policy = EstimatePolicy::PosteriorMean,
                        const Clamp& clamp = {}) const;
  double log_evidence(const LandmarkSet& xm, const Clamp& clamp = {}) const;

  // ln P(e, p, x, xm) with the hidden states summed out.
  double complete_log_likelihood(const AnnotatedSample& s) const;
  // P(Z | e, p, x, xm) over (Z_eb, Z_e, Z_n, Z_m); `log_norm` receives
  // ln P(e, p, x, xm).
  DiscretePosterior state_posterior(const AnnotatedSample& s, double* log_norm = nullptr) const;

 private:
  void check_clamp(const Clamp& clamp) const;
  std::vector<double> state_table(const std::array<Vector, kNumComponents>& per_component) const;

  const HierarchicalModel* model_;
  ConfigSpace space_;
  ConfigSpace zspace_;
  std::vector<double> log_joint_;
  std::vector<PreparedComponent> prepared_;
};

DiscretePosterior posterior_over_configs(const HierarchicalModel& model, const LandmarkSet& xm, const Clamp& clamp = {});
InferenceResult infer_landmarks(const HierarchicalModel& model, const LandmarkSet& xm,
                                EstimatePolicy policy = EstimatePolicy::PosteriorMean);
double log_evidence(const HierarchicalModel& model, const LandmarkSet& xm, const Clamp& clamp = {});
double complete_log_likelihood(const HierarchicalModel& model, const AnnotatedSample& s);

// P(node | clamp) from the discrete network alone (no measurement evidence).
Vector query_state_given_label(const HierarchicalModel& model, int node, const Clamp& clamp);
// P(a, b) from the discrete network alone; rows index a.
Matrix query_joint_states(const HierarchicalModel& model, int a, int b);

// Single text document (JSON). Doubles are written in shortest round-trip
// form so load(save(m)) == m exactly.
std::string format_model(const HierarchicalModel& model);
HierarchicalModel parse_model(std::string_view text, std::string_view source = "<memory>");
void save_model(const HierarchicalModel& model, const std::filesystem::path& path);
HierarchicalModel load_model(const std::filesystem::path& path);

}  // namespace hpm
