#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hpm/gauss.hpp"

namespace hpm {

inline constexpr int kNumPoints = 26;
inline constexpr int kNumCoords = 2 * kNumPoints;

enum class Component { Eyebrow = 0, Eye = 1, Nose = 2, Mouth = 3 };
inline constexpr std::array<Component, 4> kComponents{Component::Eyebrow, Component::Eye, Component::Nose,
                                                      Component::Mouth};
inline constexpr std::size_t kNumComponents = kComponents.size();

std::string_view to_string(Component c) noexcept;
// Accepts "eyebrow", "eye", "nose", "mouth"; throws InvalidArgument otherwise.
Component component_from_string(std::string_view name);
inline std::size_t index_of(Component c) { return static_cast<std::size_t>(c); }

// 26 landmarks stored interleaved as (x0, y0, x1, y1, ...).
class LandmarkSet {
 public:
  LandmarkSet() : coords_(Vector::Zero(kNumCoords)) {}
  // Throws SchemaViolation unless there are exactly 52 finite values.
  explicit LandmarkSet(Vector coords);

  const Vector& coords() const { return coords_; }
  Eigen::Vector2d point(int i) const { return coords_.segment<2>(2 * i); }

  friend bool operator==(const LandmarkSet& a, const LandmarkSet& b) { return a.coords_ == b.coords_; }

 private:
  Vector coords_;
};

// Disjoint ordered landmark index lists per facial component covering 0..25.
class ComponentPartition {
 public:
  ComponentPartition();  // eyebrows 0-7, eyes 8-15, nose 16-19, mouth 20-25
  explicit ComponentPartition(std::array<std::vector<int>, kNumComponents> indices);

  const std::vector<int>& points(Component c) const { return indices_[index_of(c)]; }
  int num_points(Component c) const { return static_cast<int>(points(c).size()); }
  int dim(Component c) const { return 2 * num_points(c); }

  // Component coordinates (2m values) gathered from a full 52-vector.
  Vector extract(const Vector& full, Component c) const;
  // Writes component coordinates back into a full 52-vector.
  void scatter(const Vector& part, Component c, Vector& full) const;

  friend bool operator==(const ComponentPartition&, const ComponentPartition&) = default;

 private:
  std::array<std::vector<int>, kNumComponents> indices_;
};

// Eye-center references used for normalization and the interocular distance:
// each eye center is the centroid of its index group.
struct NormalizationSpec {
  std::vector<int> left_eye{8, 9, 10, 11};
  std::vector<int> right_eye{12, 13, 14, 15};

  void validate() const;
  friend bool operator==(const NormalizationSpec&, const NormalizationSpec&) = default;
};

Eigen::Vector2d eye_center(const Vector& coords, const std::vector<int>& group);
double interocular_distance(const LandmarkSet& s, const NormalizationSpec& spec);

// Translate the eye-center midpoint to the origin and scale the interocular
// distance to 1. Throws DegenerateShape if the eye centers coincide.
LandmarkSet normalize(const Vector& raw_coords, const NormalizationSpec& spec);

struct PointErrors {
  Vector per_point;  // 26 values

  double mean() const { return per_point.mean(); }
  double component_mean(const ComponentPartition& partition, Component c) const;
};

// ||detected_i - truth_i|| / interocular for every landmark.
PointErrors normalized_error(const LandmarkSet& detected, const LandmarkSet& truth, double interocular);

struct AnnotatedSample {
  LandmarkSet truth;
  LandmarkSet measurement;
  int expression = 0;
  int pose = 0;

  friend bool operator==(const AnnotatedSample&, const AnnotatedSample&) = default;
};

std::vector<std::string> default_expression_labels();  // neutral + six basic
std::vector<std::string> default_pose_labels();        // frontal, left, right

struct Dataset {
  std::vector<AnnotatedSample> samples;
  ComponentPartition partition;
  std::vector<std::string> expression_labels = default_expression_labels();
  std::vector<std::string> pose_labels = default_pose_labels();
  NormalizationSpec normalization;

  int num_expressions() const { return static_cast<int>(expression_labels.size()); }
  int num_poses() const { return static_cast<int>(pose_labels.size()); }
  std::size_t size() const { return samples.size(); }

  // Throws EmptyInput / CardinalityMismatch.
  void validate() const;
  Dataset subset(const std::vector<std::size_t>& indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct FoldPlan {
  std::vector<std::vector<std::size_t>> folds;
  std::uint64_t seed = 0;

  // Indices of every fold except `k`, ascending.
  std::vector<std::size_t> training_indices(std::size_t k) const;
};

// Seeded shuffle of 0..n-1 dealt round-robin into k folds.
FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed);
inline FoldPlan make_folds(const Dataset& d, std::size_t k, std::uint64_t seed) { return make_folds(d.size(), k, seed); }

// JSON-lines dataset file: one header object followed by one record per line.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::string_view text, std::string_view source = "<memory>");
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string format_dataset(const Dataset& dataset);

}  // namespace hpm
