#pragma once

// Discrete Bayesian network over a handful of categorical nodes, with exact
// queries by enumeration of the joint configuration space.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hpm {

using ParentMask = std::uint32_t;
using Edge = std::pair<int, int>;  // (parent, child)

// Mixed-radix indexing of joint configurations; node 0 is most significant.
class ConfigSpace {
 public:
  explicit ConfigSpace(std::vector<int> cards);

  std::size_t size() const { return size_; }
  int num_nodes() const { return static_cast<int>(cards_.size()); }
  int cardinality(int v) const { return cards_[v]; }
  const std::vector<int>& cardinalities() const { return cards_; }
  std::size_t stride(int v) const { return strides_[v]; }

  std::size_t index(std::span<const int> config) const;
  void decode(std::size_t index, std::span<int> config) const;
  int digit(std::size_t index, int v) const { return static_cast<int>((index / strides_[v]) % cards_[v]); }

 private:
  std::vector<int> cards_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 1;
};

// CPT layout: table[row * card(v) + value], where `row` is the mixed-radix
// index of the parent values taken in ascending node order with the last
// parent varying fastest.
class DiscreteNetwork {
 public:
  DiscreteNetwork() = default;
  DiscreteNetwork(std::vector<std::string> names, std::vector<int> cards, std::vector<ParentMask> parents,
                  std::vector<std::vector<double>> cpts);

  // All CPT rows uniform.
  static DiscreteNetwork uniform(std::vector<std::string> names, std::vector<int> cards,
                                 std::vector<ParentMask> parents);

  int num_nodes() const { return static_cast<int>(cards_.size()); }
  const std::string& name(int v) const { return names_[v]; }
  const std::vector<std::string>& names() const { return names_; }
  int cardinality(int v) const { return cards_[v]; }
  const std::vector<int>& cardinalities() const { return cards_; }
  ParentMask parents(int v) const { return parents_[v]; }
  const std::vector<ParentMask>& parent_masks() const { return parents_; }
  std::vector<int> parent_list(int v) const;
  std::size_t num_rows(int v) const;
  const std::vector<double>& cpt(int v) const { return cpts_[v]; }

  // Row index of v's parent values within a full configuration.
  std::size_t row_of(int v, std::span<const int> config) const;
  double probability(int v, std::span<const int> config) const;

  std::vector<Edge> edges() const;  // sorted by (parent, child)
  std::vector<int> topological_order() const;
  std::size_t num_free_parameters() const;
  int node_index(const std::string& name) const;  // throws IndexOutOfRange

  // Acyclic, CPT sizes consistent, rows sum to 1 within 1e-10, entries >= 0.
  void validate() const;

  friend bool operator==(const DiscreteNetwork&, const DiscreteNetwork&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<int> cards_;
  std::vector<ParentMask> parents_;
  std::vector<std::vector<double>> cpts_;
};

bool is_acyclic(const std::vector<ParentMask>& parents);

// CPT entries are floored at this value before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

// sum_v ln CPT_v(config_v | parents). Throws IndexOutOfRange.
double discrete_log_joint(const DiscreteNetwork& net, std::span<const int> config);

// ln P(config) for every configuration, indexed by ConfigSpace(cards).
std::vector<double> discrete_log_joint_table(const DiscreteNetwork& net);

// Partial assignment: nullopt = free.
using Evidence = std::vector<std::optional<int>>;

// P(node | evidence) from the network alone.
std::vector<double> conditional_marginal(const DiscreteNetwork& net, int node, const Evidence& evidence);
// P(a, b | evidence) as a row-major card(a) x card(b) matrix.
std::vector<double> conditional_joint(const DiscreteNetwork& net, int a, int b, const Evidence& evidence);

}  // namespace hpm
