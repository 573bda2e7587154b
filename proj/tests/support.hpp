#pragma once

// Independent oracles and random-instance builders shared by the tests. The
// densities here use explicit inverses and LU determinants on purpose so they
// do not share a code path with the library.

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <functional>
#include <random>
#include <vector>

#include "hpm/gauss.hpp"
#include "hpm/global_model.hpp"

namespace testing {

using hpm::Matrix;
using hpm::Vector;

inline Matrix random_spd(int d, std::mt19937_64& rng, double scale = 1.0, double min_eig = 0.2) {
  std::normal_distribution<double> nd;
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = nd(rng);
  Matrix s = a * a.transpose() / d + min_eig * Matrix::Identity(d, d);
  return scale * 0.5 * (s + s.transpose());
}

inline Vector random_vector(int d, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = nd(rng);
  return v;
}

inline double direct_log_normal(const Vector& mean, const Matrix& cov, const Vector& x) {
  const Eigen::Index d = mean.size();
  const Vector r = x - mean;
  const double quad = r.dot(cov.inverse() * r);
  return -0.5 * (d * std::log(2.0 * M_PI) + std::log(cov.partialPivLu().determinant()) + quad);
}

// Random CPTs with rows drawn from a flat Dirichlet.
inline hpm::DiscreteNetwork random_network(const std::vector<int>& cards, const std::vector<hpm::ParentMask>& parents,
                                           std::mt19937_64& rng, std::vector<std::string> names = {}) {
  std::gamma_distribution<double> gd(1.0, 1.0);
  const int n = static_cast<int>(cards.size());
  if (names.empty())
    for (int v = 0; v < n; ++v) names.push_back("V" + std::to_string(v));
  std::vector<std::vector<double>> cpts;
  for (int v = 0; v < n; ++v) {
    std::size_t rows = 1;
    for (int u = 0; u < n; ++u)
      if (parents[v] & (1u << u)) rows *= cards[u];
    std::vector<double> t(rows * cards[v]);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int k = 0; k < cards[v]; ++k) s += (t[r * cards[v] + k] = gd(rng) + 1e-3);
      for (int k = 0; k < cards[v]; ++k) t[r * cards[v] + k] /= s;
    }
    cpts.push_back(std::move(t));
  }
  return hpm::DiscreteNetwork(std::move(names), cards, parents, std::move(cpts));
}

// Random DAG respecting the node order 0..n-1 (parents have lower index).
inline std::vector<hpm::ParentMask> random_dag(int n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<hpm::ParentMask> parents(n, 0);
  for (int c = 0; c < n; ++c)
    for (int q = 0; q < c; ++q)
      if (coin(rng)) parents[c] |= 1u << q;
  return parents;
}

// CPT lookup written directly from the documented layout.
inline double cpt_value(const hpm::DiscreteNetwork& net, int v, const std::vector<int>& config) {
  std::size_t row = 0;
  for (int u = 0; u < net.num_nodes(); ++u)
    if (net.parents(v) & (1u << u)) row = row * net.cardinality(u) + config[u];
  return net.cpt(v)[row * net.cardinality(v) + config[v]];
}

struct ToyOptions {
  int max_card = 3;
  bool small_components = true;  // three components of 1-2 points, the rest in the fourth
};

// Random hierarchical model with a random partition of the 26 points.
inline hpm::HierarchicalModel random_model(std::mt19937_64& rng, const ToyOptions& opt = {}) {
  using namespace hpm;
  std::uniform_int_distribution<int> card(1, opt.max_card);
  std::uniform_int_distribution<int> two(1, 2);
  std::vector<int> perm(kNumPoints);
  for (int i = 0; i < kNumPoints; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::array<std::vector<int>, kNumComponents> idx;
  std::size_t at = 0;
  for (std::size_t c = 0; c + 1 < kNumComponents; ++c) {
    const int m = opt.small_components ? two(rng) : 6;
    idx[c].assign(perm.begin() + at, perm.begin() + at + m);
    at += m;
  }
  idx[kNumComponents - 1].assign(perm.begin() + at, perm.end());

  HierarchicalModel model;
  model.partition = ComponentPartition(idx);
  std::vector<int> cards(kNumGlobalNodes);
  for (int& c : cards) c = card(rng);
  model.expression_labels.clear();
  model.pose_labels.clear();
  for (int e = 0; e < cards[0]; ++e) model.expression_labels.push_back("e" + std::to_string(e));
  for (int p = 0; p < cards[1]; ++p) model.pose_labels.push_back("p" + std::to_string(p));
  // Random DAG over a random node order.
  std::vector<int> order(kNumGlobalNodes);
  for (int i = 0; i < kNumGlobalNodes; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const auto local = random_dag(kNumGlobalNodes, 0.4, rng);
  std::vector<ParentMask> parents(kNumGlobalNodes, 0);
  for (int c = 0; c < kNumGlobalNodes; ++c)
    for (int q = 0; q < kNumGlobalNodes; ++q)
      if (local[c] & (1u << q)) parents[order[c]] |= 1u << order[q];
  model.network = random_network(cards, parents, rng, global_node_names());

  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  for (Component c : kComponents) {
    const int d = model.partition.dim(c);
    const int k = cards[z_node(c)];
    ComponentMixture& cm = model.components[index_of(c)];
    cm.log_prior = Vector::Constant(k, -std::log(static_cast<double>(k)));
    for (int z = 0; z < k; ++z) {
      cm.shape.push_back({random_vector(d, rng, 0.5), random_spd(d, rng, 0.05)});
      Matrix gain = Matrix::Identity(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) gain(i, j) += 0.1 * unif(rng);
      cm.measurement.push_back({random_vector(d, rng, 0.05), gain, random_spd(d, rng, 0.02)});
    }
  }
  model.validate();
  return model;
}

// Log evidence of one component's measurement under state z, closed form.
inline double oracle_state_evidence(const hpm::ComponentMixture& cm, int z, const Vector& xm) {
  const auto& g = cm.shape[z];
  const auto& m = cm.measurement[z];
  return direct_log_normal(m.offset + m.gain * g.mean, m.gain * g.cov * m.gain.transpose() + m.noise_cov, xm);
}

// Unnormalized log P(e, p, z..., xm) for every configuration by nested loops;
// clamped label values restrict the sum.
inline std::vector<long double> oracle_config_table(const hpm::HierarchicalModel& model, const hpm::LandmarkSet& xm,
                                                    std::optional<int> e_clamp = {}, std::optional<int> p_clamp = {}) {
  using namespace hpm;
  const auto& net = model.network;
  std::array<std::vector<double>, kNumComponents> ev;
  for (Component c : kComponents) {
    const Vector part = model.partition.extract(xm.coords(), c);
    for (int z = 0; z < model.num_states(c); ++z) ev[index_of(c)].push_back(oracle_state_evidence(model.component(c), z, part));
  }
  std::vector<long double> out;
  std::vector<int> cfg(kNumGlobalNodes);
  const auto& k = net.cardinalities();
  for (cfg[0] = 0; cfg[0] < k[0]; ++cfg[0])
    for (cfg[1] = 0; cfg[1] < k[1]; ++cfg[1])
      for (cfg[2] = 0; cfg[2] < k[2]; ++cfg[2])
        for (cfg[3] = 0; cfg[3] < k[3]; ++cfg[3])
          for (cfg[4] = 0; cfg[4] < k[4]; ++cfg[4])
            for (cfg[5] = 0; cfg[5] < k[5]; ++cfg[5]) {
              const bool excluded = (e_clamp && cfg[0] != *e_clamp) || (p_clamp && cfg[1] != *p_clamp);
              long double lp = 0.0L;
              for (int v = 0; v < kNumGlobalNodes; ++v)
                lp += std::log(static_cast<long double>(std::max(cpt_value(net, v, cfg), kProbabilityFloor)));
              for (Component c : kComponents) lp += ev[index_of(c)][cfg[z_node(c)]];
              out.push_back(excluded ? -INFINITY : lp);
            }
  return out;
}

inline long double oracle_logsumexp(const std::vector<long double>& v) {
  long double m = -INFINITY;
  for (auto x : v) m = std::max(m, x);
  long double s = 0.0L;
  for (auto x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline hpm::LandmarkSet random_landmarks(std::mt19937_64& rng, double sd = 0.5) {
  return hpm::LandmarkSet(random_vector(hpm::kNumCoords, rng, sd));
}

struct Moments {
  double mass = 0.0;
  Vector mean;
  Matrix cov;
};

// Trapezoid-free midpoint rule over a square grid centred at `c`; the
// integrand is exp(f(x)).
template <class F>
inline Moments grid_moments(int d, const Vector& c, double half_width, int steps, F f) {
  const double h = 2.0 * half_width / steps;
  Moments m;
  m.mean = Vector::Zero(d);
  m.cov = Matrix::Zero(d, d);
  Vector x(d);
  auto visit = [&](const Vector& p) {
    const double w = std::exp(f(p));
    m.mass += w;
    m.mean += w * p;
    m.cov += w * p * p.transpose();
  };
  if (d == 1) {
    for (int i = 0; i < steps; ++i) {
      x[0] = c[0] - half_width + (i + 0.5) * h;
      visit(x);
    }
  } else {
    for (int i = 0; i < steps; ++i)
      for (int j = 0; j < steps; ++j) {
        x[0] = c[0] - half_width + (i + 0.5) * h;
        x[1] = c[1] - half_width + (j + 0.5) * h;
        visit(x);
      }
  }
  m.mean /= m.mass;
  m.cov = m.cov / m.mass - m.mean * m.mean.transpose();
  m.mass *= std::pow(h, d);
  return m;
}

inline hpm::LinearGaussian random_lik(int d_in, int d_out, std::mt19937_64& rng, double noise = 0.5) {
  Matrix gain(d_out, d_in);
  for (int i = 0; i < d_out; ++i) gain.row(i) = random_vector(d_in, rng, 0.7).transpose();
  return {random_vector(d_out, rng), gain, random_spd(d_out, rng, noise)};
}

// Optimal assignment by trying every permutation (K <= 8 here).
// Returns perm with row i matched to column perm[i].
inline std::vector<int> best_matching(const Matrix& cost) {
  std::vector<int> perm(cost.cols());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = INFINITY;
  do {
    double c = 0.0;
    for (int i = 0; i < cost.rows(); ++i) c += cost(i, perm[i]);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Family score straight from the definition: walk the table, bucket by
// (parent values, child value), smoothed ML, count-weighted log likelihood.
inline double oracle_family_score(const std::vector<double>& table, const std::vector<int>& cards, int v,
                                  hpm::ParentMask parents, double n, double alpha) {
  const int nodes = static_cast<int>(cards.size());
  std::vector<int> cfg(nodes, 0);
  std::size_t rows = 1;
  for (int u = 0; u < nodes; ++u)
    if (parents & (1u << u)) rows *= cards[u];
  std::vector<long double> counts(rows * cards[v], 0.0L);
  for (std::size_t i = 0; i < table.size(); ++i) {
    std::size_t rem = i;
    for (int u = nodes - 1; u >= 0; --u) {
      cfg[u] = static_cast<int>(rem % cards[u]);
      rem /= cards[u];
    }
    std::size_t row = 0;
    for (int u = 0; u < nodes; ++u)
      if (parents & (1u << u)) row = row * cards[u] + cfg[u];
    counts[row * cards[v] + cfg[v]] += table[i];
  }
  long double ll = 0.0L;
  for (std::size_t r = 0; r < rows; ++r) {
    long double tot = 0.0L;
    for (int k = 0; k < cards[v]; ++k) tot += counts[r * cards[v] + k];
    for (int k = 0; k < cards[v]; ++k) {
      const long double c = counts[r * cards[v] + k];
      if (c > 0) ll += c * std::log((c + alpha) / (tot + cards[v] * alpha));
    }
  }
  return static_cast<double>(ll) - 0.5 * std::log(n) * (cards[v] - 1) * static_cast<double>(rows);
}

inline bool is_acyclic(const std::vector<hpm::ParentMask>& parents) {
  const int n = static_cast<int>(parents.size());
  hpm::ParentMask placed = 0;
  for (int round = 0; round < n; ++round)
    for (int v = 0; v < n; ++v)
      if (!(placed & (1u << v)) && (parents[v] & ~placed) == 0) placed |= 1u << v;
  return std::popcount(placed) == n;
}

inline std::vector<std::pair<int, int>> sorted_edges(const std::vector<hpm::ParentMask>& parents) {
  std::vector<std::pair<int, int>> e;
  for (int c = 0; c < static_cast<int>(parents.size()); ++c)
    for (int p = 0; p < static_cast<int>(parents.size()); ++p)
      if (parents[c] & (1u << p)) e.emplace_back(p, c);
  std::sort(e.begin(), e.end());
  return e;
}

struct BruteForceResult {
  double best = -INFINITY;
  std::vector<hpm::ParentMask> structure;  // lexicographically smallest among ties
};

// Every parent-set assignment, filtered by `forbidden` and acyclicity.
inline BruteForceResult brute_force_structure(const std::vector<double>& table, const std::vector<int>& cards,
                                              const std::vector<hpm::ParentMask>& forbidden, double n, double alpha) {
  const int nodes = static_cast<int>(cards.size());
  const hpm::ParentMask full = (1u << nodes) - 1;
  std::vector<hpm::ParentMask> cur(nodes, 0);
  std::vector<std::pair<std::vector<hpm::ParentMask>, double>> all;
  std::function<void(int)> rec = [&](int v) {
    if (v == nodes) {
      if (!is_acyclic(cur)) return;
      double s = 0.0;
      for (int u = 0; u < nodes; ++u) s += oracle_family_score(table, cards, u, cur[u], n, alpha);
      all.emplace_back(cur, s);
      return;
    }
    const hpm::ParentMask allowed = full & ~(1u << v) & ~forbidden[v];
    for (hpm::ParentMask m = 0; m <= full; ++m) {
      if (m & ~allowed) continue;
      cur[v] = m;
      rec(v + 1);
    }
  };
  rec(0);
  BruteForceResult r;
  for (const auto& [s, score] : all) r.best = std::max(r.best, score);
  const double tol = 1e-9 * std::max(1.0, std::abs(r.best));
  bool have = false;
  for (const auto& [s, score] : all)
    if (score >= r.best - tol && (!have || sorted_edges(s) < sorted_edges(r.structure))) {
      r.structure = s;
      have = true;
    }
  return r;
}

}  // namespace testing
