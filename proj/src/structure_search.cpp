#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "hpm/error.hpp"
#include "hpm/learning.hpp"
#include "learning_detail.hpp"

namespace hpm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kMaxNodes = 8;

void check_inputs(const std::vector<double>& counts, const ConfigSpace& space) {
  if (space.num_nodes() > kMaxNodes)
    fail(ErrorKind::TooManyNodes, std::to_string(space.num_nodes()) + " nodes; exact search handles at most 8");
  if (counts.size() != space.size()) fail(ErrorKind::DimensionMismatch, "expected-count table size");
}

double smoothed_loglik(const std::vector<double>& counts, int card, double pseudocount) {
  double ll = 0.0;
  for (std::size_t r = 0; r * card < counts.size(); ++r) {
    double total = 0.0;
    for (int k = 0; k < card; ++k) total += counts[r * card + k];
    const double denom = total + card * pseudocount;
    for (int k = 0; k < card; ++k) {
      const double c = counts[r * card + k];
      if (c != 0.0) ll += c * std::log(std::max((c + pseudocount) / denom, kProbabilityFloor));
    }
  }
  return ll;
}

double penalty(const ConfigSpace& space, int node, ParentMask parents, double n) {
  double rows = 1.0;
  for (int u = 0; u < space.num_nodes(); ++u)
    if (parents & (1u << u)) rows *= space.cardinality(u);
  return 0.5 * std::log(n) * (space.cardinality(node) - 1) * rows;
}

// Precomputed family scores and the subset DP over orderings.
class Search {
 public:
  Search(const std::vector<double>& counts, const ConfigSpace& space, double n, const StructureConstraints& cons,
         double pseudocount)
      : nodes_(space.num_nodes()), full_((1u << nodes_) - 1), score_(nodes_, std::vector<double>(full_ + 1, kNegInf)) {
    for (int v = 0; v < nodes_; ++v) {
      const ParentMask allowed = allowed_parents(cons, v);
      // Enumerate subsets of the allowed parents.
      for (ParentMask u = allowed;; u = (u - 1) & allowed) {
        score_[v][u] = family_score(counts, space, v, u, n, pseudocount);
        if (u == 0) break;
      }
    }
  }

  int nodes() const { return nodes_; }

  // Best total score with every edge in `present` used and none in `absent`;
  // parents[v] receives the maximizing parent sets when requested.
  double solve(const std::vector<ParentMask>& present, const std::vector<ParentMask>& absent,
               std::vector<ParentMask>* parents) const {
    const std::size_t subsets = std::size_t{1} << nodes_;
    // best_parent[v][C]: best allowed parent set of v inside C.
    std::vector<std::vector<double>> bp(nodes_, std::vector<double>(subsets, kNegInf));
    std::vector<std::vector<ParentMask>> arg(nodes_, std::vector<ParentMask>(subsets, 0));
    for (int v = 0; v < nodes_; ++v) {
      for (ParentMask c = 0; c < subsets; ++c) {
        if (c & (1u << v)) continue;
        double best = kNegInf;
        ParentMask best_u = 0;
        if ((c & present[v]) == present[v]) {
          const ParentMask usable = c & ~absent[v];
          for (ParentMask u = usable;; u = (u - 1) & usable) {
            if ((u & present[v]) == present[v] && score_[v][u] > best) {
              best = score_[v][u];
              best_u = u;
            }
            if (u == 0) break;
          }
        }
        bp[v][c] = best;
        arg[v][c] = best_u;
      }
    }
    std::vector<double> best(subsets, kNegInf);
    std::vector<int> sink(subsets, -1);
    best[0] = 0.0;
    for (ParentMask s = 1; s < subsets; ++s) {
      for (int v = 0; v < nodes_; ++v) {
        if (!(s & (1u << v))) continue;
        const ParentMask rest = s & ~(1u << v);
        if (best[rest] == kNegInf || bp[v][rest] == kNegInf) continue;
        const double cand = best[rest] + bp[v][rest];
        if (cand > best[s]) {
          best[s] = cand;
          sink[s] = v;
        }
      }
    }
    if (parents && best[full_] != kNegInf) {
      parents->assign(nodes_, 0);
      for (ParentMask s = full_; s != 0;) {
        const int v = sink[s];
        const ParentMask rest = s & ~(1u << v);
        (*parents)[v] = arg[v][rest];
        s = rest;
      }
    }
    return best[full_];
  }

 private:
  ParentMask allowed_parents(const StructureConstraints& cons, int v) const {
    ParentMask m = 0;
    for (int u = 0; u < nodes_; ++u)
      if (cons.allows(u, v)) m |= 1u << u;
    return m;
  }

  int nodes_;
  ParentMask full_;
  std::vector<std::vector<double>> score_;  // [v][parent mask]
};

}  // namespace

double family_score(const std::vector<double>& expected_counts, const ConfigSpace& space, int node, ParentMask parents,
                    double n, double pseudocount) {
  check_inputs(expected_counts, space);
  if (node < 0 || node >= space.num_nodes()) fail(ErrorKind::IndexOutOfRange, "node index");
  if (parents & (1u << node)) fail(ErrorKind::InvalidArgument, "a node cannot be its own parent");
  const std::vector<double> counts = detail::family_counts_of(expected_counts, space, node, parents);
  return smoothed_loglik(counts, space.cardinality(node), pseudocount) - penalty(space, node, parents, n);
}

double structure_score(const std::vector<double>& expected_counts, const ConfigSpace& space,
                       const std::vector<ParentMask>& parents, double n, double pseudocount) {
  check_inputs(expected_counts, space);
  if (parents.size() != static_cast<std::size_t>(space.num_nodes()))
    fail(ErrorKind::DimensionMismatch, "parent list size");
  // Smoothed CPTs, then a single pass over the table.
  std::vector<std::vector<double>> log_cpt;
  double pen = 0.0;
  for (int v = 0; v < space.num_nodes(); ++v) {
    std::vector<double> c = detail::family_counts_of(expected_counts, space, v, parents[v]);
    const int card = space.cardinality(v);
    for (std::size_t r = 0; r * card < c.size(); ++r) {
      double total = 0.0;
      for (int k = 0; k < card; ++k) total += c[r * card + k];
      for (int k = 0; k < card; ++k)
        c[r * card + k] = std::log(std::max((c[r * card + k] + pseudocount) / (total + card * pseudocount), kProbabilityFloor));
    }
    log_cpt.push_back(std::move(c));
    pen += penalty(space, v, parents[v], n);
  }
  double ll = 0.0;
  for (std::size_t idx = 0; idx < expected_counts.size(); ++idx) {
    if (expected_counts[idx] == 0.0) continue;
    double lp = 0.0;
    for (int v = 0; v < space.num_nodes(); ++v) {
      std::size_t row = 0;
      for (int u = 0; u < space.num_nodes(); ++u)
        if (parents[v] & (1u << u)) row = row * space.cardinality(u) + space.digit(idx, u);
      lp += log_cpt[v][row * space.cardinality(v) + space.digit(idx, v)];
    }
    ll += expected_counts[idx] * lp;
  }
  return ll - pen;
}

std::vector<ParentMask> structure_search(const std::vector<double>& expected_counts, const ConfigSpace& space, double n,
                                         const StructureConstraints& constraints, double pseudocount) {
  check_inputs(expected_counts, space);
  if (constraints.num_nodes() != space.num_nodes())
    fail(ErrorKind::DimensionMismatch, "constraints cover " + std::to_string(constraints.num_nodes()) + " nodes, space has " +
                                           std::to_string(space.num_nodes()));
  const Search search(expected_counts, space, n, constraints, pseudocount);
  const int nv = search.nodes();
  std::vector<ParentMask> present(nv, 0), absent(nv, 0);
  const double opt = search.solve(present, absent, nullptr);
  const double tol = 1e-9 * std::max(1.0, std::abs(opt));

  // Candidate edges in lexicographic (parent, child) order.
  std::vector<Edge> candidates;
  for (int p = 0; p < nv; ++p)
    for (int c = 0; c < nv; ++c)
      if (constraints.allows(p, c)) candidates.emplace_back(p, c);

  auto feasible = [&](const std::vector<ParentMask>& pr, const std::vector<ParentMask>& ab) {
    return search.solve(pr, ab, nullptr) >= opt - tol;
  };

  // Grow the edge list one entry at a time: stop as soon as an optimal DAG
  // exists without further edges, else take the smallest next edge that
  // still admits an optimum.
  std::size_t next = 0;
  while (true) {
    std::vector<ParentMask> closed = absent;
    for (std::size_t i = next; i < candidates.size(); ++i) closed[candidates[i].second] |= 1u << candidates[i].first;
    if (feasible(present, closed)) break;
    bool extended = false;
    for (std::size_t i = next; i < candidates.size(); ++i) {
      const auto [p, c] = candidates[i];
      present[c] |= 1u << p;
      if (feasible(present, absent)) {
        next = i + 1;
        extended = true;
        break;
      }
      present[c] &= ~(1u << p);
      absent[c] |= 1u << p;
    }
    if (!extended) fail(ErrorKind::InvalidArgument, "structure search failed to reconstruct an optimal DAG");
  }
  return present;
}

}  // namespace hpm
