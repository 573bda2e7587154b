#include "hpm/evaluate.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hpm/error.hpp"

namespace hpm {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::IoError, "cannot write '" + path.string() + "'");
  f << text;
  if (!f) fail(ErrorKind::IoError, "write failed for '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::ParseError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<Detection> detect_all(const HierarchicalModel& model, const Dataset& dataset, const DetectOptions& options) {
  check_compatible(model, dataset);
  const InferenceEngine engine(model);
  std::vector<Detection> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset.samples) {
    Clamp clamp = options.clamp;
    if (options.clamp_true_expression) clamp.expression = s.expression;
    if (options.clamp_true_pose) clamp.pose = s.pose;
    InferenceResult r = engine.infer(s.measurement, options.policy, clamp);
    Detection d{std::move(r.estimate), {}, r.log_evidence};
    for (Component c : kComponents) d.state_marginals[index_of(c)] = r.discrete.marginal(z_node(c));
    out.push_back(std::move(d));
  }
  return out;
}

std::string format_detections(const std::vector<Detection>& detections, EstimatePolicy policy) {
  std::string out = "sample,policy";
  for (int i = 0; i < kNumPoints; ++i) out += ",x" + std::to_string(i) + ",y" + std::to_string(i);
  if (!detections.empty())
    for (Component c : kComponents)
      for (Eigen::Index k = 0; k < detections.front().state_marginals[index_of(c)].size(); ++k)
        out += ",z_" + std::string(to_string(c)) + "_" + std::to_string(k);
  out += ",log_evidence\n";
  for (std::size_t j = 0; j < detections.size(); ++j) {
    const Detection& d = detections[j];
    out += std::to_string(j) + "," + std::string(to_string(policy));
    for (Eigen::Index i = 0; i < kNumCoords; ++i) out += "," + num(d.estimate.coords()[i]);
    for (const Vector& m : d.state_marginals)
      for (Eigen::Index k = 0; k < m.size(); ++k) out += "," + num(m[k]);
    out += "," + num(d.log_evidence) + "\n";
  }
  return out;
}

void save_detections(const std::vector<Detection>& detections, EstimatePolicy policy, const std::filesystem::path& path) {
  write_file(path, format_detections(detections, policy));
}

DetectionFile parse_detections(std::string_view text, std::string_view source) {
  DetectionFile out;
  std::size_t line_no = 0;
  bool header = true;
  std::optional<EstimatePolicy> policy;
  auto where = [&] { return std::string(source) + ":" + std::to_string(line_no); };
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (header) {
      if (f.size() < 2 + kNumCoords || f[0] != "sample" || f[1] != "policy")
        fail(ErrorKind::SchemaViolation, where() + ": not a detections header");
      header = false;
      continue;
    }
    if (f.size() < 2 + kNumCoords) fail(ErrorKind::SchemaViolation, where() + ": too few fields");
    const EstimatePolicy p = estimate_policy_from_string(f[1]);
    if (policy && *policy != p) fail(ErrorKind::SchemaViolation, where() + ": mixed estimate policies");
    policy = p;
    Vector coords(kNumCoords);
    for (int i = 0; i < kNumCoords; ++i) {
      const std::string field(f[2 + i]);
      char* end = nullptr;
      errno = 0;
      coords[i] = std::strtod(field.c_str(), &end);
      if (field.empty() || *end != '\0' || errno == ERANGE)
        fail(ErrorKind::ParseError, where() + ": bad number '" + field + "'");
    }
    if (std::stoul(std::string(f[0])) != out.estimates.size())
      fail(ErrorKind::SchemaViolation, where() + ": sample indices must be consecutive from 0");
    out.estimates.emplace_back(std::move(coords));
  }
  if (header) fail(ErrorKind::EmptyInput, std::string(source) + ": missing header");
  if (policy) out.policy = *policy;
  return out;
}

DetectionFile load_detections(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::ParseError, "detections file '" + path.string() + "' not found");
  return parse_detections(read_file(path), path.string());
}

ErrorRow error_row(const std::string& method, const std::vector<LandmarkSet>& estimates, const Dataset& truth) {
  if (estimates.size() != truth.size())
    fail(ErrorKind::DimensionMismatch, std::to_string(estimates.size()) + " estimates for " + std::to_string(truth.size()) +
                                           " samples");
  if (estimates.empty()) fail(ErrorKind::EmptyInput, "no samples to evaluate");
  ErrorRow row;
  row.method = method;
  row.n = estimates.size();
  for (std::size_t j = 0; j < estimates.size(); ++j) {
    const LandmarkSet& t = truth.samples[j].truth;
    row.per_point += normalized_error(estimates[j], t, interocular_distance(t, truth.normalization)).per_point;
  }
  row.per_point /= static_cast<double>(row.n);
  const PointErrors pe{row.per_point};
  for (Component c : kComponents) row.per_component[index_of(c)] = pe.component_mean(truth.partition, c);
  row.overall = pe.mean();
  return row;
}

EvaluationReport evaluate_detections(const DetectionFile& detections, const Dataset& truth) {
  std::vector<LandmarkSet> meas;
  for (const auto& s : truth.samples) meas.push_back(s.measurement);
  EvaluationReport r;
  r.rows.push_back(error_row("measurement", meas, truth));
  r.rows.push_back(error_row(std::string(to_string(detections.policy)), detections.estimates, truth));
  return r;
}

EvaluationReport kfold_evaluate(const Dataset& dataset, std::size_t k, std::uint64_t fold_seed, const LearnConfig& config) {
  dataset.validate();
  const FoldPlan plan = make_folds(dataset, k, fold_seed);
  // Pooled in original sample order so the result does not depend on fold layout.
  std::vector<LandmarkSet> mean_est(dataset.size()), mode_est(dataset.size()), meas(dataset.size());
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const Dataset train = dataset.subset(plan.training_indices(f));
    const Dataset test = dataset.subset(plan.folds[f]);
    const HierarchicalModel model = structure_em(train, config).model;
    DetectOptions opts;
    const auto a = detect_all(model, test, opts);
    opts.policy = EstimatePolicy::MaxWeightMean;
    const auto b = detect_all(model, test, opts);
    for (std::size_t j = 0; j < plan.folds[f].size(); ++j) {
      const std::size_t idx = plan.folds[f][j];
      mean_est[idx] = a[j].estimate;
      mode_est[idx] = b[j].estimate;
      meas[idx] = dataset.samples[idx].measurement;
    }
  }
  EvaluationReport r;
  r.folds = k;
  r.rows.push_back(error_row("measurement", meas, dataset));
  r.rows.push_back(error_row(std::string(to_string(EstimatePolicy::PosteriorMean)), mean_est, dataset));
  r.rows.push_back(error_row(std::string(to_string(EstimatePolicy::MaxWeightMean)), mode_est, dataset));
  return r;
}

std::string format_report_csv(const EvaluationReport& report) {
  std::string out = "method,n,overall";
  for (Component c : kComponents) out += "," + std::string(to_string(c));
  for (int i = 0; i < kNumPoints; ++i) out += ",p" + std::to_string(i);
  out += "\n";
  for (const auto& r : report.rows) {
    out += r.method + "," + std::to_string(r.n) + "," + num(r.overall);
    for (double v : r.per_component) out += "," + num(v);
    for (Eigen::Index i = 0; i < kNumPoints; ++i) out += "," + num(r.per_point[i]);
    out += "\n";
  }
  return out;
}

std::string format_report_table(const EvaluationReport& report) {
  char buf[160];
  std::string out;
  if (report.folds) out += std::to_string(report.folds) + "-fold pooled errors (x100, interocular units)\n";
  else out += "mean errors (x100, interocular units)\n";
  std::snprintf(buf, sizeof buf, "%-18s %8s %8s %8s %8s %8s %6s\n", "method", "eyebrow", "eye", "nose", "mouth", "overall", "n");
  out += buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-18s %8.4f %8.4f %8.4f %8.4f %8.4f %6zu\n", r.method.c_str(), 100 * r.per_component[0],
                  100 * r.per_component[1], 100 * r.per_component[2], 100 * r.per_component[3], 100 * r.overall, r.n);
    out += buf;
  }
  return out;
}

}  // namespace hpm
