#include <chrono>
#include <limits>
#include <optional>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "hpm/error.hpp"
#include "hpm/learning.hpp"

namespace hpm {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool dropped(double prev, double cur, double slack) { return cur < prev - slack * std::abs(prev); }

std::vector<Edge> edge_list(const std::vector<ParentMask>& parents) {
  std::vector<Edge> e;
  for (int p = 0; p < static_cast<int>(parents.size()); ++p)
    for (int c = 0; c < static_cast<int>(parents.size()); ++c)
      if (parents[c] & (1u << p)) e.emplace_back(p, c);
  return e;
}

std::string describe_edges(const std::vector<Edge>& edges) {
  const auto& names = global_node_names();
  std::string s;
  for (const auto& [p, c] : edges) s += (s.empty() ? "" : ", ") + names[p] + "->" + names[c];
  return s.empty() ? "(none)" : s;
}

// Log evidence sum_j ln P(x_j, xm_j) of a standalone mixture.
double mixture_loglik(const ComponentMixture& cm, const ComponentData& data, Matrix* resp) {
  const PreparedComponent pc(cm);
  double total = 0.0;
  for (Eigen::Index j = 0; j < data.truth.rows(); ++j) {
    Vector t = cm.log_prior + pc.state_log_likelihoods(data.truth.row(j).transpose(), data.measurement.row(j).transpose());
    const double norm = logsumexp({t.data(), static_cast<std::size_t>(t.size())});
    total += norm;
    if (resp) resp->row(j) = (t.array() - norm).exp().transpose();
  }
  return total;
}

}  // namespace

bool TrainTrace::param_em_monotone(double slack) const {
  const TraceRecord* prev = nullptr;
  for (const auto& r : records) {
    if (r.step != "param") {
      prev = nullptr;
      continue;
    }
    if (prev && prev->structure_iter == r.structure_iter && dropped(prev->score.expected_bic, r.score.expected_bic, slack))
      return false;
    prev = &r;
  }
  return true;
}

std::string format_trace(const TrainTrace& trace, const std::vector<std::string>& node_names, bool include_timing) {
  std::string out;
  for (const auto& r : trace.records) {
    nlohmann::ordered_json j;
    j["structure_iter"] = r.structure_iter;
    j["param_iter"] = r.param_iter;
    j["step"] = r.step;
    auto edges = nlohmann::ordered_json::array();
    for (const auto& [p, c] : r.edges) edges.push_back({node_names.at(p), node_names.at(c)});
    j["edges"] = std::move(edges);
    j["expected_bic"] = r.score.expected_bic;
    j["expected_loglik"] = r.score.expected_loglik;
    j["penalty"] = r.score.penalty;
    j["dim"] = r.score.dim;
    j["n"] = r.score.n;
    j["log_likelihood"] = r.log_likelihood;
    if (r.retained_bic) j["retained_bic"] = *r.retained_bic;
    if (include_timing) j["seconds"] = r.seconds;
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json end;
  end["convergence"] = trace.convergence;
  end["warnings"] = trace.warnings;
  out += end.dump() + "\n";
  return out;
}

void save_trace(const TrainTrace& trace, const std::vector<std::string>& node_names, const std::filesystem::path& path,
                bool include_timing) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::IoError, "cannot write trace file '" + path.string() + "'");
  f << format_trace(trace, node_names, include_timing);
  if (!f) fail(ErrorKind::IoError, "write failed for '" + path.string() + "'");
}

TrainResult structure_em(const Dataset& dataset, const LearnConfig& config) {
  TrainTrace trace;
  return structure_em(dataset, config, trace);
}

TrainResult structure_em(const Dataset& dataset, const LearnConfig& config, TrainTrace& trace) {
  config.validate();
  trace = {};
  const auto t0 = Clock::now();
  const StructureConstraints constraints = StructureConstraints::preset(config.structure);

  HierarchicalModel model = init_states(dataset, config).model;
  std::vector<ParentMask> structure = model.network.parent_masks();
  const double n = static_cast<double>(dataset.size());

  auto record = [&](int si, int pi, const char* step, const ScoreReport& s, double ll, std::optional<double> retained) {
    trace.records.push_back({si, pi, step, edge_list(structure), s, ll, retained, seconds_since(t0)});
  };
  auto add_warnings = [&](std::vector<std::string> w, int si) {
    for (auto& s : w) trace.warnings.push_back("structure iteration " + std::to_string(si) + ": " + s);
  };

  {
    const Expectations ex = e_step(model, dataset);
    record(0, -1, "init", expected_bic(model, dataset, ex, config.beta_tied), ex.log_likelihood, std::nullopt);
  }

  for (int si = 0;; ++si) {
    // Step 1: parameter EM for the current structure.
    std::optional<double> prev;
    bool converged = false;
    for (int l = 0; l < config.max_param_em_iters; ++l) {
      const Expectations ex = e_step(model, dataset);
      MStepResult m = m_step(dataset, ex, structure, config, model);
      add_warnings(std::move(m.warnings), si);
      model = std::move(m.model);
      const ScoreReport s = expected_bic(model, dataset, ex, config.beta_tied);
      record(si, l, "param", s, ex.log_likelihood, std::nullopt);
      if (prev && dropped(*prev, s.expected_bic, config.monotonicity_slack)) {
        const std::string msg = "expected BIC fell from " + std::to_string(*prev) + " to " + std::to_string(s.expected_bic) +
                                " at structure iteration " + std::to_string(si) + ", parameter iteration " + std::to_string(l);
        if (config.strict_monotonicity) {
          trace.convergence = "monotonicity violation";
          fail(ErrorKind::MonotonicityViolation, msg);
        }
        trace.warnings.push_back(msg);
      }
      if (prev && std::abs(s.expected_bic - *prev) < config.param_em_rel_tol * std::abs(*prev)) {
        converged = true;
        break;
      }
      prev = s.expected_bic;
    }
    if (!converged) trace.warnings.push_back("parameter EM hit the iteration limit at structure iteration " + std::to_string(si));

    // Step 2: structure update under the current model's posteriors.
    const Expectations ex = e_step(model, dataset);
    const std::vector<ParentMask> next =
        structure_search(ex.expected_counts, ConfigSpace(model.network.cardinalities()), n, constraints, config.cpt_pseudocount);
    if (next == structure) {
      trace.convergence = "structure unchanged";
      break;
    }
    if (si + 1 >= config.max_structure_iters) {
      trace.convergence = "structure iteration limit";
      break;
    }

    // Step 3: parameters for the new structure from the same posteriors.
    const double retained = expected_bic(model, dataset, ex, config.beta_tied).expected_bic;
    structure = next;
    MStepResult m = m_step(dataset, ex, structure, config, model);
    add_warnings(std::move(m.warnings), si + 1);
    model = std::move(m.model);
    const ScoreReport s = expected_bic(model, dataset, ex, config.beta_tied);
    record(si + 1, -1, "structure", s, ex.log_likelihood, retained);
    if (dropped(retained, s.expected_bic, config.monotonicity_slack))
      trace.warnings.push_back("structure step lowered the expected BIC from " + std::to_string(retained) + " to " +
                               std::to_string(s.expected_bic) + " (" + describe_edges(edge_list(structure)) + ")");
  }

  model.metadata.provenance = "structure-em";
  model.metadata.seed = config.seed;
  model.metadata.notes = {{"structure_preset", std::string(to_string(config.structure))},
                          {"beta_tied", config.beta_tied ? "true" : "false"},
                          {"convergence", trace.convergence}};
  model.validate();
  return {std::move(model), trace};
}

ComponentMixture fit_detached_component(const ComponentData& data, int k, const LearnConfig& config, std::uint64_t seed) {
  if (data.truth.rows() < k)
    fail(ErrorKind::TooFewSamples, std::to_string(data.truth.rows()) + " samples for " + std::to_string(k) + " states");
  const KMeansResult km = kmeans(data.truth, k, config.kmeans_restarts, seed, config.kmeans_max_iters);
  Matrix w = Matrix::Zero(data.truth.rows(), k);
  for (Eigen::Index j = 0; j < data.truth.rows(); ++j) w(j, km.assignment[j]) = 1.0;
  ComponentMixture cm = fit_component(data, w, config.fit_options()).mixture;
  std::optional<double> prev;
  for (int l = 0; l < config.max_param_em_iters; ++l) {
    const double ll = mixture_loglik(cm, data, &w);
    if (prev && std::abs(ll - *prev) < config.param_em_rel_tol * std::abs(*prev)) break;
    prev = ll;
    cm = fit_component(data, w, config.fit_options(), &cm).mixture;
  }
  return cm;
}

std::array<int, kNumComponents> select_state_counts(const Dataset& train, const Dataset& validation,
                                                    const LearnConfig& config) {
  config.validate();
  train.validate();
  validation.validate();
  if (!(train.partition == validation.partition))
    fail(ErrorKind::DimensionMismatch, "training and validation sets use different partitions");
  const auto td = component_data(train);
  const auto vd = component_data(validation);
  std::array<int, kNumComponents> out{};
  for (Component c : kComponents) {
    const StateRange r = config.state_ranges[index_of(c)];
    if (r.min == r.max) {
      out[index_of(c)] = r.min;
      continue;
    }
    double best = -std::numeric_limits<double>::infinity();
    for (int k = r.min; k <= r.max; ++k) {
      const ComponentMixture cm = fit_detached_component(td[index_of(c)], k, config, config.seed + index_of(c));
      const double score = mixture_loglik(cm, vd[index_of(c)], nullptr);
      if (score > best) {  // ties keep the smaller K
        best = score;
        out[index_of(c)] = k;
      }
    }
  }
  return out;
}

}  // namespace hpm
