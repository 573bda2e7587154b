#include "hpm/synth.hpp"

#include <cmath>
#include <random>

#include "hpm/error.hpp"

namespace hpm {
namespace {

int draw_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return static_cast<int>(k);
  }
  // Rounding left u above the cumulative total: take the last non-zero entry.
  for (std::size_t k = probs.size(); k-- > 0;)
    if (probs[k] > 0.0) return static_cast<int>(k);
  return 0;
}

}  // namespace

Dataset synthesize(const HierarchicalModel& generator, std::size_t n, std::uint64_t seed,
                   std::vector<std::array<int, kNumComponents>>* states) {
  generator.validate();
  const DiscreteNetwork& net = generator.network;
  const std::vector<int> order = net.topological_order();
  std::mt19937_64 rng(seed);

  Dataset d;
  d.partition = generator.partition;
  d.expression_labels = generator.expression_labels;
  d.pose_labels = generator.pose_labels;
  d.normalization = generator.normalization;
  d.samples.reserve(n);

  std::vector<int> config(net.num_nodes(), 0);
  if (states) states->clear();
  for (std::size_t j = 0; j < n; ++j) {
    for (int v : order) {
      const std::size_t row = net.row_of(v, config);
      const int card = net.cardinality(v);
      config[v] = draw_categorical({net.cpt(v).data() + row * card, static_cast<std::size_t>(card)}, rng);
    }
    Vector truth(kNumCoords), meas(kNumCoords);
    for (Component c : kComponents) {
      const ComponentMixture& cm = generator.component(c);
      const int z = config[z_node(c)];
      const Vector x = sample_one(cm.shape[z], rng);
      const LinearGaussian& lg = cm.measurement[z];
      const Vector xm = sample_one(Gaussian{lg.offset + lg.gain * x, lg.noise_cov}, rng);
      generator.partition.scatter(x, c, truth);
      generator.partition.scatter(xm, c, meas);
    }
    if (states) states->push_back({config[2], config[3], config[4], config[5]});
    d.samples.push_back({LandmarkSet(std::move(truth)), LandmarkSet(std::move(meas)), config[kNodeExpression],
                         config[kNodePose]});
  }
  return d;
}

Vector template_face() {
  // eyebrows 0-7, eyes 8-15, nose 16-19, mouth 20-25 (default partition order)
  static const double pts[kNumPoints][2] = {
      {-0.80, -0.30}, {-0.62, -0.38}, {-0.42, -0.38}, {-0.24, -0.32},  // left brow
      {0.24, -0.32},  {0.42, -0.38},  {0.62, -0.38},  {0.80, -0.30},   // right brow
      {-0.70, 0.00},  {-0.50, -0.08}, {-0.30, 0.00},  {-0.50, 0.08},   // left eye
      {0.30, 0.00},   {0.50, -0.08},  {0.70, 0.00},   {0.50, 0.08},    // right eye
      {0.00, 0.30},   {-0.15, 0.55},  {0.00, 0.60},   {0.15, 0.55},    // nose
      {-0.35, 1.00},  {0.35, 1.00},   {0.00, 0.90},   {0.00, 0.97},    // mouth corners, upper lip
      {0.00, 1.03},   {0.00, 1.12},                                    // lower lip
  };
  Vector v(kNumCoords);
  for (int i = 0; i < kNumPoints; ++i) {
    v[2 * i] = pts[i][0];
    v[2 * i + 1] = pts[i][1];
  }
  return v;
}

HierarchicalModel make_generator(const GeneratorSpec& spec) {
  if (spec.cpt_strength <= 0.0 || spec.cpt_strength > 1.0)
    fail(ErrorKind::InvalidArgument, "cpt_strength must lie in (0, 1]");
  HierarchicalModel m;
  m.expression_labels = spec.expression_labels;
  m.pose_labels = spec.pose_labels;

  std::vector<int> cards{static_cast<int>(spec.expression_labels.size()), static_cast<int>(spec.pose_labels.size())};
  for (int k : spec.num_states) cards.push_back(k);

  const auto& names = global_node_names();
  auto node = [&](const std::string& n) {
    for (int v = 0; v < kNumGlobalNodes; ++v)
      if (names[v] == n) return v;
    fail(ErrorKind::InvalidArgument, "unknown node '" + n + "'");
  };
  std::vector<ParentMask> parents(kNumGlobalNodes, 0);
  for (const auto& [p, c] : spec.edges) parents[node(c)] |= 1u << node(p);
  if (!is_acyclic(parents)) fail(ErrorKind::InvalidArgument, "generator edges form a cycle");

  DiscreteNetwork shape = DiscreteNetwork::uniform(names, cards, parents);
  std::vector<std::vector<double>> cpts;
  for (int v = 0; v < kNumGlobalNodes; ++v) {
    const std::size_t rows = shape.num_rows(v);
    const int k = cards[v];
    std::vector<double> t(rows * k, 1.0 / k);
    if (parents[v] != 0 && k > 1) {
      const double rest = (1.0 - spec.cpt_strength) / (k - 1);
      for (std::size_t r = 0; r < rows; ++r)
        for (int x = 0; x < k; ++x) t[r * k + x] = (static_cast<int>(r % k) == x) ? spec.cpt_strength : rest;
    }
    cpts.push_back(std::move(t));
  }
  m.network = DiscreteNetwork(names, cards, parents, std::move(cpts));

  const Vector face = template_face();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Component c : kComponents) {
    const int d = m.partition.dim(c);
    const int k = spec.num_states[index_of(c)];
    const Vector base = m.partition.extract(face, c);
    ComponentMixture& cm = m.components[index_of(c)];
    cm.log_prior = Vector::Constant(k, -std::log(static_cast<double>(k)));
    for (int z = 0; z < k; ++z) {
      Vector offset(d);
      for (int i = 0; i < d; ++i) offset[i] = normal(rng);
      // RMS per-point displacement = state_separation
      offset *= spec.state_separation * std::sqrt(static_cast<double>(d / 2)) / offset.norm();
      cm.shape.push_back({base + offset, spec.shape_sd * spec.shape_sd * Matrix::Identity(d, d)});
      cm.measurement.push_back(LinearGaussian::identity(d, spec.noise_sd * spec.noise_sd * Matrix::Identity(d, d)));
    }
  }
  m.metadata.provenance = "generator";
  m.metadata.seed = spec.seed;
  m.validate();
  return m;
}

GeneratorSpec generator_preset(const std::string& name) {
  GeneratorSpec spec;
  if (name == "structured") {
    spec.edges = {{"E", "Z_mouth"}, {"E", "Z_eyebrow"}, {"P", "Z_nose"}};
  } else if (name == "empty") {
    spec.edges = {};
  } else if (name == "chain") {
    spec.edges = {{"E", "Z_mouth"}, {"Z_mouth", "Z_eye"}, {"P", "Z_nose"}};
  } else {
    fail(ErrorKind::InvalidArgument, "unknown generator preset '" + name + "'");
  }
  return spec;
}

}  // namespace hpm
