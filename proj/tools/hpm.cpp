// hpm: synthesize, train, detect, evaluate, sample and inspect hierarchical
// shape models from the command line.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "hpm/error.hpp"
#include "hpm/evaluate.hpp"
#include "hpm/synth.hpp"

namespace {

using namespace hpm;

// Exit status per error kind; 1 is reserved for unexpected failures and 2 for
// command-line usage errors.
int exit_code(ErrorKind k) { return 10 + static_cast<int>(k); }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::IoError, "cannot write '" + path + "'");
  f << text;
  if (!f) fail(ErrorKind::IoError, "write failed for '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::ParseError, "dataset file '" + path + "' not found");
  return load_dataset(path);
}

HierarchicalModel read_model(const std::string& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::ParseError, "model file '" + path + "' not found");
  return load_model(path);
}

int label_index(const std::vector<std::string>& labels, const std::string& name, const char* what) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == name) return static_cast<int>(i);
  fail(ErrorKind::CardinalityMismatch, std::string("unknown ") + what + " label '" + name + "'");
}

std::string edge_dump(const DiscreteNetwork& net) {
  std::string out;
  const auto edges = net.edges();
  if (edges.empty()) out += "  (no edges)\n";
  for (const auto& [p, c] : edges) out += "  " + net.name(p) + " -> " + net.name(c) + "\n";
  return out;
}

// Options shared by train and evaluate --kfold.
struct TrainFlags {
  std::uint64_t seed = 0;
  std::vector<int> states{3, 3, 3, 3};
  std::string structure = "default";
  bool beta_untied = false;
  int max_param_iters = 50;
  int max_structure_iters = 20;
  double param_tol = 1e-6;
  int kmeans_restarts = 10;
  bool allow_score_drops = false;

  CLI::Option* seed_opt = nullptr;

  void add(CLI::App* app, bool seed_required = true) {
    seed_opt = app->add_option("--seed", seed, "random seed");
    if (seed_required) seed_opt->required();
    app->add_option("--states", states, "hidden states per component (eyebrow eye nose mouth)")->expected(4);
    app->add_option("--structure", structure, "structure constraints: default, permissive or empty")
        ->check(CLI::IsMember({"default", "permissive", "empty"}));
    app->add_flag("--beta-untied", beta_untied, "learn a measurement gain and offset per state");
    app->add_option("--max-param-iters", max_param_iters, "parameter EM iterations per structure")->check(CLI::PositiveNumber);
    app->add_option("--max-structure-iters", max_structure_iters, "structure iterations")->check(CLI::PositiveNumber);
    app->add_option("--param-tol", param_tol, "relative expected-BIC change that ends parameter EM")->check(CLI::PositiveNumber);
    app->add_option("--kmeans-restarts", kmeans_restarts, "k-means restarts per component")->check(CLI::PositiveNumber);
    app->add_flag("--allow-score-drops", allow_score_drops, "record expected-BIC drops as warnings instead of failing");
  }

  LearnConfig config() const {
    LearnConfig c;
    c.seed = seed;
    for (std::size_t i = 0; i < kNumComponents; ++i) c.num_states[i] = states[i];
    c.structure = structure_preset_from_string(structure);
    c.beta_tied = !beta_untied;
    c.max_param_em_iters = max_param_iters;
    c.max_structure_iters = max_structure_iters;
    c.param_em_rel_tol = param_tol;
    c.kmeans_restarts = kmeans_restarts;
    c.strict_monotonicity = !allow_score_drops;
    return c;
  }
};

// ---- synth -----------------------------------------------------------------

struct SynthCmd {
  std::string preset = "structured";
  std::string generator;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string write_generator;
  std::optional<double> cpt_strength, state_separation, shape_sd, noise_sd;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("synth", "sample a synthetic dataset");
    c->add_option("--preset", preset, "generator preset: structured, empty or chain");
    c->add_option("--generator", generator, "sample from this model file instead of a preset");
    c->add_option("--n", n, "number of samples")->required();
    c->add_option("--seed", seed, "random seed")->required();
    c->add_option("--out", out, "dataset file")->required();
    c->add_option("--write-generator", write_generator, "also save the generator model");
    c->add_option("--cpt-strength", cpt_strength, "peak entry of child CPT rows");
    c->add_option("--state-separation", state_separation, "RMS offset of state means from the template");
    c->add_option("--shape-sd", shape_sd, "per-coordinate shape sd");
    c->add_option("--noise-sd", noise_sd, "per-coordinate measurement noise sd");
    c->callback([this] { run(); });
  }

  void run() const {
    HierarchicalModel gen;
    if (!generator.empty()) {
      gen = read_model(generator);
    } else {
      GeneratorSpec spec = generator_preset(preset);
      if (cpt_strength) spec.cpt_strength = *cpt_strength;
      if (state_separation) spec.state_separation = *state_separation;
      if (shape_sd) spec.shape_sd = *shape_sd;
      if (noise_sd) spec.noise_sd = *noise_sd;
      gen = make_generator(spec);
    }
    save_dataset(synthesize(gen, n, seed), out);
    if (!write_generator.empty()) save_model(gen, write_generator);
    spdlog::info("wrote {} samples to {}", n, out);
  }
};

// ---- train -----------------------------------------------------------------

struct TrainCmd {
  std::string data, out, trace, validation;
  bool select_states = false;
  int k_min = 2, k_max = 6;
  bool trace_timing = false;
  TrainFlags flags;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "learn structure and parameters with structural EM");
    c->add_option("--data", data, "training dataset")->required();
    c->add_option("--out", out, "model file")->required();
    c->add_option("--trace", trace, "trace file (one JSON record per line)");
    c->add_flag("--trace-timing", trace_timing, "include wall time in the trace");
    c->add_flag("--select-states", select_states, "choose state counts on a validation set first");
    c->add_option("--validation", validation, "validation dataset for --select-states");
    c->add_option("--k-min", k_min, "smallest state count tried")->check(CLI::PositiveNumber);
    c->add_option("--k-max", k_max, "largest state count tried")->check(CLI::PositiveNumber);
    flags.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    const Dataset ds = read_dataset(data);
    LearnConfig config = flags.config();
    if (select_states) {
      if (validation.empty()) fail(ErrorKind::InvalidArgument, "--select-states needs --validation");
      for (auto& r : config.state_ranges) r = {k_min, k_max};
      config.num_states = select_state_counts(ds, read_dataset(validation), config);
      std::string ks;
      for (int k : config.num_states) ks += " " + std::to_string(k);
      std::cout << "selected states:" << ks << "\n";
    }
    TrainTrace tr;
    TrainResult res;
    try {
      res = structure_em(ds, config, tr);
    } catch (const Error&) {
      if (!trace.empty()) save_trace(tr, global_node_names(), trace, trace_timing);
      throw;
    }
    save_model(res.model, out);
    if (!trace.empty()) save_trace(res.trace, global_node_names(), trace, trace_timing);
    for (const auto& w : res.trace.warnings) spdlog::warn("{}", w);

    const ScoreReport s = expected_bic(res.model, ds, e_step(res.model, ds), config.beta_tied);
    std::cout << "expected_bic " << num(s.expected_bic) << "\nexpected_loglik " << num(s.expected_loglik) << "\npenalty "
              << num(s.penalty) << "\ndim " << s.dim << "\nn " << s.n << "\nconvergence " << res.trace.convergence
              << "\nedges:\n"
              << edge_dump(res.model.network);
  }
};

// ---- detect ----------------------------------------------------------------

struct DetectCmd {
  std::string model, data, out, policy = "posterior-mean", clamp_expression, clamp_pose;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("detect", "infer landmark positions from measurements");
    c->add_option("--model", model, "model file")->required();
    c->add_option("--data", data, "dataset file")->required();
    c->add_option("--out", out, "detections CSV")->required();
    c->add_option("--policy", policy, "posterior-mean or max-weight-mean");
    c->add_option("--clamp-expression", clamp_expression, "expression label, or 'truth' for each sample's own");
    c->add_option("--clamp-pose", clamp_pose, "pose label, or 'truth' for each sample's own");
    c->callback([this] { run(); });
  }

  void run() const {
    const HierarchicalModel m = read_model(model);
    const Dataset ds = read_dataset(data);
    DetectOptions opts;
    opts.policy = estimate_policy_from_string(policy);
    if (clamp_expression == "truth") opts.clamp_true_expression = true;
    else if (!clamp_expression.empty()) opts.clamp.expression = label_index(m.expression_labels, clamp_expression, "expression");
    if (clamp_pose == "truth") opts.clamp_true_pose = true;
    else if (!clamp_pose.empty()) opts.clamp.pose = label_index(m.pose_labels, clamp_pose, "pose");
    const auto dets = detect_all(m, ds, opts);
    save_detections(dets, opts.policy, out);
    double mean_ev = 0.0;
    for (const auto& d : dets) mean_ev += d.log_evidence;
    std::cout << "samples " << dets.size() << "\nmean_log_evidence " << num(dets.empty() ? 0.0 : mean_ev / dets.size())
              << "\n";
  }
};

// ---- evaluate --------------------------------------------------------------

struct EvaluateCmd {
  std::string data, detections, out;
  std::size_t kfold = 0;
  std::uint64_t fold_seed = 0;
  TrainFlags flags;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("evaluate", "normalized error report (table on stdout, CSV with --out)");
    c->add_option("--data", data, "dataset with ground truth")->required();
    c->add_option("--detections", detections, "detections CSV from 'detect'");
    c->add_option("--kfold", kfold, "train and detect per fold instead of reading detections");
    c->add_option("--fold-seed", fold_seed, "seed of the fold shuffle (defaults to --seed)");
    c->add_option("--out", out, "report CSV");
    // Training flags only matter in k-fold mode.
    flags.add(c, false);
    c->callback([this] { run(); });
  }

  void run() const {
    const Dataset ds = read_dataset(data);
    EvaluationReport report;
    if (kfold > 0) {
      if (!detections.empty()) fail(ErrorKind::InvalidArgument, "use either --detections or --kfold");
      if (flags.seed_opt->count() == 0) fail(ErrorKind::InvalidArgument, "--kfold needs --seed");
      report = kfold_evaluate(ds, kfold, fold_seed ? fold_seed : flags.seed, flags.config());
    } else {
      if (detections.empty()) fail(ErrorKind::InvalidArgument, "--detections or --kfold is required");
      report = evaluate_detections(load_detections(detections), ds);
    }
    std::cout << format_report_table(report);
    if (!out.empty()) write_text(out, format_report_csv(report));
  }
};

// ---- sample ----------------------------------------------------------------

struct SampleCmd {
  std::string model, component, out;
  int state = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("sample", "draw shapes of one component in one hidden state");
    c->add_option("--model", model, "model file")->required();
    c->add_option("--component", component, "eyebrow, eye, nose or mouth")->required();
    c->add_option("--state", state, "hidden state index")->required();
    c->add_option("--n", n, "number of shapes")->required();
    c->add_option("--seed", seed, "random seed")->required();
    c->add_option("--out", out, "CSV file")->required();
    c->callback([this] { run(); });
  }

  void run() const {
    const HierarchicalModel m = read_model(model);
    const Component c = component_from_string(component);
    const auto shapes = sample_state_shapes(m.component(c), state, n, seed);
    std::string text = "sample";
    for (int i : m.partition.points(c)) text += ",x" + std::to_string(i) + ",y" + std::to_string(i);
    text += "\n";
    for (std::size_t j = 0; j < shapes.size(); ++j) {
      text += std::to_string(j);
      for (Eigen::Index i = 0; i < shapes[j].size(); ++i) text += "," + num(shapes[j][i]);
      text += "\n";
    }
    write_text(out, text);
  }
};

// ---- inspect ---------------------------------------------------------------

struct InspectCmd {
  std::string model, csv;
  std::vector<std::string> pair;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("inspect", "print structure and conditional state tables");
    c->add_option("--model", model, "model file")->required();
    c->add_option("--csv", csv, "also write every table as long-format CSV");
    c->add_option("--pair", pair, "two node names for a joint table (default Z_eye Z_mouth)")->expected(2);
    c->callback([this] { run(); });
  }

  void run() const {
    const HierarchicalModel m = read_model(model);
    const DiscreteNetwork& net = m.network;
    std::ostringstream txt;
    std::string rows = "table,row,column,value\n";
    char buf[64];
    txt << "structure:\n" << edge_dump(net);
    for (const auto& [p, c] : net.edges()) rows += "edge," + net.name(p) + "," + net.name(c) + ",1\n";

    // P(Z | label) with one column per label value, plus the largest total
    // variation distance between any two columns.
    auto conditional = [&](int label_node, const std::vector<std::string>& labels, int z) {
      const std::string table = "P(" + net.name(z) + "|" + net.name(label_node) + ")";
      std::vector<Vector> cols;
      for (int v = 0; v < static_cast<int>(labels.size()); ++v) {
        Clamp clamp;
        (label_node == kNodeExpression ? clamp.expression : clamp.pose) = v;
        cols.push_back(query_state_given_label(m, z, clamp));
      }
      txt << "\n" << table << "\n" << std::string(8, ' ');
      for (const auto& l : labels) {
        std::snprintf(buf, sizeof buf, " %10.10s", l.c_str());
        txt << buf;
      }
      txt << "\n";
      for (Eigen::Index k = 0; k < cols.front().size(); ++k) {
        std::snprintf(buf, sizeof buf, "  z=%-3ld ", static_cast<long>(k));
        txt << buf;
        for (std::size_t v = 0; v < cols.size(); ++v) {
          std::snprintf(buf, sizeof buf, " %10.4f", cols[v][k]);
          txt << buf;
          rows += table + "," + std::to_string(k) + "," + labels[v] + "," + num(cols[v][k]) + "\n";
        }
        txt << "\n";
      }
      double tv = 0.0;
      for (std::size_t a = 0; a < cols.size(); ++a)
        for (std::size_t b = a + 1; b < cols.size(); ++b) tv = std::max(tv, 0.5 * (cols[a] - cols[b]).cwiseAbs().sum());
      std::snprintf(buf, sizeof buf, "  max TV between columns: %.4f\n", tv);
      txt << buf;
      rows += "maxTV " + table + ",,," + num(tv) + "\n";
    };
    for (Component c : kComponents) conditional(kNodeExpression, m.expression_labels, z_node(c));
    for (Component c : kComponents) conditional(kNodePose, m.pose_labels, z_node(c));

    const int a = net.node_index(pair.empty() ? "Z_eye" : pair[0]);
    const int b = net.node_index(pair.empty() ? "Z_mouth" : pair[1]);
    const Matrix joint = query_joint_states(m, a, b);
    const std::string table = "P(" + net.name(a) + "," + net.name(b) + ")";
    txt << "\n" << table << " rows " << net.name(a) << ", columns " << net.name(b) << "\n";
    for (Eigen::Index i = 0; i < joint.rows(); ++i) {
      txt << " ";
      for (Eigen::Index j = 0; j < joint.cols(); ++j) {
        std::snprintf(buf, sizeof buf, " %8.4f", joint(i, j));
        txt << buf;
        rows += table + "," + std::to_string(i) + "," + std::to_string(j) + "," + num(joint(i, j)) + "\n";
      }
      txt << "\n";
    }
    std::cout << txt.str();
    if (!csv.empty()) write_text(csv, rows);
  }
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("hpm");
  logger->set_pattern("hpm: %l: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("HPM_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Hierarchical probabilistic facial landmark model"};
  app.set_config("--config", "", "TOML/INI file; sections named after subcommands, flags override it");
  app.require_subcommand(1);

  SynthCmd synth;
  TrainCmd train;
  DetectCmd detect;
  EvaluateCmd evaluate;
  SampleCmd sample;
  InspectCmd inspect;
  synth.add(app);
  train.add(app);
  detect.add(app);
  evaluate.add(app);
  sample.add(app);
  inspect.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const hpm::Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
