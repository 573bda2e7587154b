#include "hpm/shape_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "hpm/error.hpp"

namespace hpm {

std::string_view to_string(Component c) noexcept {
  switch (c) {
    case Component::Eyebrow: return "eyebrow";
    case Component::Eye: return "eye";
    case Component::Nose: return "nose";
    case Component::Mouth: return "mouth";
  }
  return "?";
}

Component component_from_string(std::string_view name) {
  for (Component c : kComponents)
    if (to_string(c) == name) return c;
  fail(ErrorKind::InvalidArgument, "unknown component '" + std::string(name) + "'");
}

LandmarkSet::LandmarkSet(Vector coords) : coords_(std::move(coords)) {
  if (coords_.size() != kNumCoords)
    fail(ErrorKind::SchemaViolation,
         "landmark set has " + std::to_string(coords_.size()) + " values, expected " + std::to_string(kNumCoords));
  if (!coords_.allFinite()) fail(ErrorKind::SchemaViolation, "landmark set has non-finite coordinates");
}

ComponentPartition::ComponentPartition()
    : ComponentPartition({std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}, std::vector<int>{8, 9, 10, 11, 12, 13, 14, 15},
                          std::vector<int>{16, 17, 18, 19}, std::vector<int>{20, 21, 22, 23, 24, 25}}) {}

ComponentPartition::ComponentPartition(std::array<std::vector<int>, kNumComponents> indices)
    : indices_(std::move(indices)) {
  std::vector<int> seen(kNumPoints, 0);
  for (Component c : kComponents) {
    if (indices_[index_of(c)].empty())
      fail(ErrorKind::SchemaViolation, "partition component '" + std::string(to_string(c)) + "' is empty");
    for (int i : indices_[index_of(c)]) {
      if (i < 0 || i >= kNumPoints) fail(ErrorKind::SchemaViolation, "partition index " + std::to_string(i) + " out of range");
      if (seen[i]++) fail(ErrorKind::SchemaViolation, "partition index " + std::to_string(i) + " assigned twice");
    }
  }
  for (int i = 0; i < kNumPoints; ++i)
    if (!seen[i]) fail(ErrorKind::SchemaViolation, "partition does not cover point " + std::to_string(i));
}

Vector ComponentPartition::extract(const Vector& full, Component c) const {
  const auto& idx = points(c);
  Vector out(2 * idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out.segment<2>(2 * k) = full.segment<2>(2 * idx[k]);
  return out;
}

void ComponentPartition::scatter(const Vector& part, Component c, Vector& full) const {
  const auto& idx = points(c);
  if (part.size() != static_cast<Eigen::Index>(2 * idx.size()))
    fail(ErrorKind::DimensionMismatch, "component coordinates have the wrong size");
  for (std::size_t k = 0; k < idx.size(); ++k) full.segment<2>(2 * idx[k]) = part.segment<2>(2 * k);
}

void NormalizationSpec::validate() const {
  for (const auto* group : {&left_eye, &right_eye}) {
    if (group->empty()) fail(ErrorKind::SchemaViolation, "eye index group is empty");
    for (int i : *group)
      if (i < 0 || i >= kNumPoints) fail(ErrorKind::SchemaViolation, "eye index " + std::to_string(i) + " out of range");
  }
}

Eigen::Vector2d eye_center(const Vector& coords, const std::vector<int>& group) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (int i : group) c += coords.segment<2>(2 * i);
  return c / static_cast<double>(group.size());
}

double interocular_distance(const LandmarkSet& s, const NormalizationSpec& spec) {
  return (eye_center(s.coords(), spec.left_eye) - eye_center(s.coords(), spec.right_eye)).norm();
}

LandmarkSet normalize(const Vector& raw_coords, const NormalizationSpec& spec) {
  spec.validate();
  const LandmarkSet raw(raw_coords);
  const Eigen::Vector2d left = eye_center(raw.coords(), spec.left_eye);
  const Eigen::Vector2d right = eye_center(raw.coords(), spec.right_eye);
  const double iod = (left - right).norm();
  if (!(iod >= 1e-9)) fail(ErrorKind::DegenerateShape, "interocular distance below 1e-9");
  const Eigen::Vector2d origin = 0.5 * (left + right);
  Vector out(kNumCoords);
  for (int i = 0; i < kNumPoints; ++i) out.segment<2>(2 * i) = (raw.coords().segment<2>(2 * i) - origin) / iod;
  return LandmarkSet(std::move(out));
}

double PointErrors::component_mean(const ComponentPartition& partition, Component c) const {
  double acc = 0.0;
  for (int i : partition.points(c)) acc += per_point[i];
  return acc / static_cast<double>(partition.num_points(c));
}

PointErrors normalized_error(const LandmarkSet& detected, const LandmarkSet& truth, double interocular) {
  if (!(interocular > 0.0) || !std::isfinite(interocular))
    fail(ErrorKind::DegenerateShape, "interocular distance must be positive");
  PointErrors e{Vector(kNumPoints)};
  for (int i = 0; i < kNumPoints; ++i) {
    const Eigen::Vector2d d = detected.point(i) - truth.point(i);
    e.per_point[i] = std::hypot(d[0], d[1]) / interocular;
  }
  return e;
}

std::vector<std::string> default_expression_labels() {
  return {"neutral", "anger", "disgust", "fear", "happiness", "sadness", "surprise"};
}

std::vector<std::string> default_pose_labels() { return {"frontal", "left", "right"}; }

void Dataset::validate() const {
  if (samples.empty()) fail(ErrorKind::EmptyInput, "dataset has no samples");
  if (expression_labels.empty() || pose_labels.empty())
    fail(ErrorKind::SchemaViolation, "label lists must be non-empty");
  normalization.validate();
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const auto& s = samples[j];
    if (s.expression < 0 || s.expression >= num_expressions())
      fail(ErrorKind::CardinalityMismatch, "record " + std::to_string(j) + ": field 'expression' = " +
                                               std::to_string(s.expression) + " outside [0, " +
                                               std::to_string(num_expressions()) + ")");
    if (s.pose < 0 || s.pose >= num_poses())
      fail(ErrorKind::CardinalityMismatch, "record " + std::to_string(j) + ": field 'pose' = " + std::to_string(s.pose) +
                                               " outside [0, " + std::to_string(num_poses()) + ")");
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.partition = partition;
  out.expression_labels = expression_labels;
  out.pose_labels = pose_labels;
  out.normalization = normalization;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples.size()) fail(ErrorKind::IndexOutOfRange, "sample index " + std::to_string(i));
    out.samples.push_back(samples[i]);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::training_indices(std::size_t k) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (f != k) out.insert(out.end(), folds[f].begin(), folds[f].end());
  std::sort(out.begin(), out.end());
  return out;
}

FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::InvalidArgument, "fold count must be at least 2");
  if (k > n)
    fail(ErrorKind::TooFewSamples, std::to_string(n) + " samples cannot fill " + std::to_string(k) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldPlan plan;
  plan.seed = seed;
  plan.folds.resize(k);
  for (std::size_t i = 0; i < n; ++i) plan.folds[i % k].push_back(order[i]);
  return plan;
}

}  // namespace hpm
