#include "hpm/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "hpm/error.hpp"
#include "hpm/gauss.hpp"
#include "hpm/kernels.hpp"

namespace hpm {

ConfigSpace::ConfigSpace(std::vector<int> cards) : cards_(std::move(cards)), strides_(cards_.size()) {
  for (int c : cards_)
    if (c < 1) fail(ErrorKind::InvalidArgument, "cardinality must be positive");
  for (int v = num_nodes() - 1; v >= 0; --v) {
    strides_[v] = size_;
    size_ *= static_cast<std::size_t>(cards_[v]);
  }
}

std::size_t ConfigSpace::index(std::span<const int> config) const {
  if (config.size() != cards_.size()) fail(ErrorKind::DimensionMismatch, "configuration length");
  std::size_t idx = 0;
  for (int v = 0; v < num_nodes(); ++v) {
    if (config[v] < 0 || config[v] >= cards_[v])
      fail(ErrorKind::IndexOutOfRange, "value " + std::to_string(config[v]) + " of node " + std::to_string(v));
    idx += strides_[v] * static_cast<std::size_t>(config[v]);
  }
  return idx;
}

void ConfigSpace::decode(std::size_t index, std::span<int> config) const {
  for (int v = 0; v < num_nodes(); ++v) config[v] = digit(index, v);
}

bool is_acyclic(const std::vector<ParentMask>& parents) {
  const int n = static_cast<int>(parents.size());
  ParentMask placed = 0;
  for (int round = 0; round < n; ++round) {
    bool progress = false;
    for (int v = 0; v < n; ++v) {
      if (placed & (1u << v)) continue;
      if ((parents[v] & ~placed) == 0) {
        placed |= 1u << v;
        progress = true;
      }
    }
    if (!progress) break;
  }
  return std::popcount(placed) == n;
}

DiscreteNetwork::DiscreteNetwork(std::vector<std::string> names, std::vector<int> cards,
                                 std::vector<ParentMask> parents, std::vector<std::vector<double>> cpts)
    : names_(std::move(names)), cards_(std::move(cards)), parents_(std::move(parents)), cpts_(std::move(cpts)) {
  validate();
}

DiscreteNetwork DiscreteNetwork::uniform(std::vector<std::string> names, std::vector<int> cards,
                                         std::vector<ParentMask> parents) {
  DiscreteNetwork net;
  net.names_ = std::move(names);
  net.cards_ = std::move(cards);
  net.parents_ = std::move(parents);
  net.cpts_.resize(net.cards_.size());
  for (int v = 0; v < net.num_nodes(); ++v)
    net.cpts_[v].assign(net.num_rows(v) * net.cards_[v], 1.0 / net.cards_[v]);
  net.validate();
  return net;
}

std::vector<int> DiscreteNetwork::parent_list(int v) const {
  std::vector<int> out;
  for (int u = 0; u < num_nodes(); ++u)
    if (parents_[v] & (1u << u)) out.push_back(u);
  return out;
}

std::size_t DiscreteNetwork::num_rows(int v) const {
  std::size_t rows = 1;
  for (int u : parent_list(v)) rows *= static_cast<std::size_t>(cards_[u]);
  return rows;
}

std::size_t DiscreteNetwork::row_of(int v, std::span<const int> config) const {
  std::size_t row = 0;
  for (int u = 0; u < num_nodes(); ++u)
    if (parents_[v] & (1u << u)) row = row * static_cast<std::size_t>(cards_[u]) + static_cast<std::size_t>(config[u]);
  return row;
}

double DiscreteNetwork::probability(int v, std::span<const int> config) const {
  return cpts_[v][row_of(v, config) * cards_[v] + config[v]];
}

std::vector<Edge> DiscreteNetwork::edges() const {
  std::vector<Edge> out;
  for (int p = 0; p < num_nodes(); ++p)
    for (int c = 0; c < num_nodes(); ++c)
      if (parents_[c] & (1u << p)) out.emplace_back(p, c);
  return out;
}

std::vector<int> DiscreteNetwork::topological_order() const {
  std::vector<int> order;
  ParentMask placed = 0;
  while (static_cast<int>(order.size()) < num_nodes()) {
    bool progress = false;
    for (int v = 0; v < num_nodes(); ++v) {
      if (!(placed & (1u << v)) && (parents_[v] & ~placed) == 0) {
        order.push_back(v);
        placed |= 1u << v;
        progress = true;
      }
    }
    if (!progress) fail(ErrorKind::InvalidArgument, "network has a cycle");
  }
  return order;
}

std::size_t DiscreteNetwork::num_free_parameters() const {
  std::size_t total = 0;
  for (int v = 0; v < num_nodes(); ++v) total += static_cast<std::size_t>(cards_[v] - 1) * num_rows(v);
  return total;
}

int DiscreteNetwork::node_index(const std::string& name) const {
  for (int v = 0; v < num_nodes(); ++v)
    if (names_[v] == name) return v;
  fail(ErrorKind::IndexOutOfRange, "no node named '" + name + "'");
}

void DiscreteNetwork::validate() const {
  const int n = num_nodes();
  if (n > 31) fail(ErrorKind::TooManyNodes, "at most 31 nodes are representable");
  if (static_cast<int>(names_.size()) != n || static_cast<int>(parents_.size()) != n ||
      static_cast<int>(cpts_.size()) != n)
    fail(ErrorKind::DimensionMismatch, "network node lists disagree in length");
  for (int v = 0; v < n; ++v) {
    if (cards_[v] < 1) fail(ErrorKind::InvalidArgument, "node " + names_[v] + " has no states");
    if (parents_[v] & (1u << v)) fail(ErrorKind::InvalidArgument, "node " + names_[v] + " is its own parent");
    if (parents_[v] >> n) fail(ErrorKind::IndexOutOfRange, "node " + names_[v] + " has an unknown parent");
  }
  if (!is_acyclic(parents_)) fail(ErrorKind::InvalidArgument, "network has a cycle");
  for (int v = 0; v < n; ++v) {
    const std::size_t rows = num_rows(v);
    if (cpts_[v].size() != rows * cards_[v])
      fail(ErrorKind::DimensionMismatch, "CPT of " + names_[v] + " has " + std::to_string(cpts_[v].size()) +
                                             " entries, expected " + std::to_string(rows * cards_[v]));
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (int k = 0; k < cards_[v]; ++k) {
        const double p = cpts_[v][r * cards_[v] + k];
        if (!(p >= 0.0) || !std::isfinite(p))
          fail(ErrorKind::InvalidArgument, "CPT of " + names_[v] + " has an invalid entry");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-10)
        fail(ErrorKind::InvalidArgument, "CPT row " + std::to_string(r) + " of " + names_[v] + " sums to " +
                                             std::to_string(sum));
    }
  }
}

double discrete_log_joint(const DiscreteNetwork& net, std::span<const int> config) {
  if (static_cast<int>(config.size()) != net.num_nodes()) fail(ErrorKind::DimensionMismatch, "configuration length");
  for (int v = 0; v < net.num_nodes(); ++v)
    if (config[v] < 0 || config[v] >= net.cardinality(v))
      fail(ErrorKind::IndexOutOfRange, "value " + std::to_string(config[v]) + " of node " + net.name(v));
  double acc = 0.0;
  for (int v = 0; v < net.num_nodes(); ++v) acc += std::log(std::max(net.probability(v, config), kProbabilityFloor));
  return acc;
}

std::vector<double> discrete_log_joint_table(const DiscreteNetwork& net) {
  const ConfigSpace space(net.cardinalities());
  std::vector<double> table(space.size(), 0.0);
  std::vector<int> config(net.num_nodes());
  // Accumulate node by node so each CPT log is taken once per entry.
  for (int v = 0; v < net.num_nodes(); ++v) {
    std::vector<double> logs(net.cpt(v).size());
    for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = std::log(std::max(net.cpt(v)[i], kProbabilityFloor));
    for (std::size_t idx = 0; idx < space.size(); ++idx) {
      space.decode(idx, config);
      table[idx] += logs[net.row_of(v, config) * net.cardinality(v) + config[v]];
    }
  }
  return table;
}

namespace {

void check_evidence(const DiscreteNetwork& net, const Evidence& evidence) {
  if (static_cast<int>(evidence.size()) != net.num_nodes()) fail(ErrorKind::DimensionMismatch, "evidence length");
  for (int v = 0; v < net.num_nodes(); ++v)
    if (evidence[v] && (*evidence[v] < 0 || *evidence[v] >= net.cardinality(v)))
      fail(ErrorKind::IndexOutOfRange, "clamped value " + std::to_string(*evidence[v]) + " of node " + net.name(v));
}

void check_node(const DiscreteNetwork& net, int v) {
  if (v < 0 || v >= net.num_nodes()) fail(ErrorKind::IndexOutOfRange, "node " + std::to_string(v));
}

// Probabilities of all configurations consistent with the evidence (others 0).
std::vector<double> restricted_probabilities(const DiscreteNetwork& net, const Evidence& evidence) {
  const ConfigSpace space(net.cardinalities());
  std::vector<double> table = discrete_log_joint_table(net);
  for (std::size_t idx = 0; idx < space.size(); ++idx)
    for (int v = 0; v < net.num_nodes(); ++v)
      if (evidence[v] && space.digit(idx, v) != *evidence[v]) table[idx] = -std::numeric_limits<double>::infinity();
  const double m = kernels::max_value(table);
  std::vector<double> probs(table.size());
  kernels::exp_shifted(table, m, probs);
  return probs;
}

}  // namespace

std::vector<double> conditional_marginal(const DiscreteNetwork& net, int node, const Evidence& evidence) {
  check_node(net, node);
  check_evidence(net, evidence);
  const ConfigSpace space(net.cardinalities());
  const std::vector<double> probs = restricted_probabilities(net, evidence);
  std::vector<double> out(net.cardinality(node), 0.0);
  for (std::size_t idx = 0; idx < space.size(); ++idx) out[space.digit(idx, node)] += probs[idx];
  double total = 0.0;
  for (double p : out) total += p;
  for (double& p : out) p /= total;
  return out;
}

std::vector<double> conditional_joint(const DiscreteNetwork& net, int a, int b, const Evidence& evidence) {
  check_node(net, a);
  check_node(net, b);
  check_evidence(net, evidence);
  const ConfigSpace space(net.cardinalities());
  const std::vector<double> probs = restricted_probabilities(net, evidence);
  const int cb = net.cardinality(b);
  std::vector<double> out(static_cast<std::size_t>(net.cardinality(a)) * cb, 0.0);
  for (std::size_t idx = 0; idx < space.size(); ++idx)
    out[static_cast<std::size_t>(space.digit(idx, a)) * cb + space.digit(idx, b)] += probs[idx];
  double total = 0.0;
  for (double p : out) total += p;
  for (double& p : out) p /= total;
  return out;
}

}  // namespace hpm
