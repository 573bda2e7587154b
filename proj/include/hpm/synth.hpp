#pragma once

// Synthetic ground truth: ancestral sampling from a hierarchical model, plus
// a parametric generator-model builder used for fixtures and experiments.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hpm/global_model.hpp"

namespace hpm {

// Draws (E, P, Z) from the network, then X_i ~ P(X_i | Z_i) and
// X_m,i ~ P(X_m,i | X_i, Z_i). Deterministic given the seed. The sampled
// hidden states are reported through `states` when given.
Dataset synthesize(const HierarchicalModel& generator, std::size_t n, std::uint64_t seed,
                   std::vector<std::array<int, kNumComponents>>* states = nullptr);

// Mean face in normalized units: eye centers at (-0.5, 0) and (0.5, 0).
Vector template_face();

struct GeneratorSpec {
  std::vector<std::string> expression_labels{"neutral", "happiness", "surprise"};
  std::vector<std::string> pose_labels{"frontal", "left", "right"};
  std::array<int, kNumComponents> num_states{3, 3, 3, 3};
  std::vector<std::pair<std::string, std::string>> edges;  // node names, parent first
  double cpt_strength = 0.8;      // peak entry of every child CPT row
  double state_separation = 0.12; // RMS per-point offset of each state mean from the template
  double shape_sd = 0.02;         // per-coordinate sd of the true shape around its state mean
  double noise_sd = 0.05;         // per-coordinate measurement noise sd
  std::uint64_t seed = 1;         // drives the random state-mean offsets
};

// Network: uniform root CPTs; a child's row r puts cpt_strength on value
// (r mod K) and spreads the rest evenly. Measurement gains are identity.
HierarchicalModel make_generator(const GeneratorSpec& spec);

// Named presets: "structured" (E->Z_mouth, E->Z_eyebrow, P->Z_nose),
// "empty" (no edges), "chain" (E->Z_mouth, Z_mouth->Z_eye, P->Z_nose).
GeneratorSpec generator_preset(const std::string& name);

}  // namespace hpm
