#pragma once

// Batch detection, detection files, and normalized-error reports.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hpm/learning.hpp"

namespace hpm {

struct DetectOptions {
  EstimatePolicy policy = EstimatePolicy::PosteriorMean;
  Clamp clamp;                  // fixed label values
  bool clamp_true_expression = false;  // use each sample's own label instead
  bool clamp_true_pose = false;
};

struct Detection {
  LandmarkSet estimate;
  std::array<Vector, kNumComponents> state_marginals;
  double log_evidence = 0.0;
};

// Samples are processed in input order; measurements only (truth unused).
std::vector<Detection> detect_all(const HierarchicalModel& model, const Dataset& dataset, const DetectOptions& options = {});

// CSV: sample, policy, x0, y0, ..., x25, y25, z_<component>_<k>..., log_evidence.
// Values use %.17g so parsing recovers the estimates bit for bit.
std::string format_detections(const std::vector<Detection>& detections, EstimatePolicy policy);
void save_detections(const std::vector<Detection>& detections, EstimatePolicy policy, const std::filesystem::path& path);

struct DetectionFile {
  EstimatePolicy policy = EstimatePolicy::PosteriorMean;
  std::vector<LandmarkSet> estimates;
};
DetectionFile parse_detections(std::string_view text, std::string_view source = "<memory>");
DetectionFile load_detections(const std::filesystem::path& path);

struct ErrorRow {
  std::string method;
  Vector per_point = Vector::Zero(kNumPoints);  // mean over samples
  std::array<double, kNumComponents> per_component{};
  double overall = 0.0;
  std::size_t n = 0;
};

struct EvaluationReport {
  std::vector<ErrorRow> rows;
  std::size_t folds = 0;  // 0 outside k-fold mode
};

// Per-sample errors are normalized by the interocular distance of the truth.
ErrorRow error_row(const std::string& method, const std::vector<LandmarkSet>& estimates, const Dataset& truth);

// Rows: "measurement" then the detection policy.
EvaluationReport evaluate_detections(const DetectionFile& detections, const Dataset& truth);

// Train on k-1 folds, detect the held-out fold with both policies, pool.
// Rows: "measurement", "posterior-mean", "max-weight-mean".
EvaluationReport kfold_evaluate(const Dataset& dataset, std::size_t k, std::uint64_t fold_seed, const LearnConfig& config);

// Machine-readable: method, n, overall, eyebrow, eye, nose, mouth, p0..p25.
std::string format_report_csv(const EvaluationReport& report);
// Human-readable table with the same numbers.
std::string format_report_table(const EvaluationReport& report);

}  // namespace hpm
