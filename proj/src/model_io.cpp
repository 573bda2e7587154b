#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hpm/error.hpp"
#include "hpm/global_model.hpp"
#include "json_util.hpp"

namespace hpm {
namespace {

using nlohmann::ordered_json;
using json = nlohmann::json;

constexpr const char* kFormat = "hpm-model";
constexpr int kVersion = 1;

std::vector<double> flat(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

std::vector<double> flat(const Vector& v) { return {v.data(), v.data() + v.size()}; }

void require_finite(const std::vector<double>& values, const std::string& what) {
  for (double x : values)
    if (!std::isfinite(x)) fail(ErrorKind::InvalidArgument, "cannot serialize non-finite value in " + what);
}

template <typename T>
T field(const json& obj, const char* name, const std::string& ctx) {
  if (!obj.is_object()) fail(ErrorKind::SchemaViolation, ctx + ": expected an object");
  const auto it = obj.find(name);
  if (it == obj.end()) fail(ErrorKind::SchemaViolation, ctx + ": missing field '" + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::SchemaViolation, ctx + ": field '" + name + "' has the wrong type");
  }
}

Vector vector_field(const json& obj, const char* name, Eigen::Index n, const std::string& ctx) {
  const auto v = field<std::vector<double>>(obj, name, ctx);
  if (static_cast<Eigen::Index>(v.size()) != n)
    fail(ErrorKind::SchemaViolation, ctx + ": field '" + name + "' has " + std::to_string(v.size()) +
                                         " values, expected " + std::to_string(n));
  return Eigen::Map<const Vector>(v.data(), n);
}

Matrix matrix_field(const json& obj, const char* name, Eigen::Index rows, Eigen::Index cols, const std::string& ctx) {
  const auto v = field<std::vector<double>>(obj, name, ctx);
  if (static_cast<Eigen::Index>(v.size()) != rows * cols)
    fail(ErrorKind::SchemaViolation, ctx + ": field '" + name + "' has " + std::to_string(v.size()) +
                                         " values, expected " + std::to_string(rows * cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v[static_cast<std::size_t>(i * cols + j)];
  return m;
}

ordered_json component_json(const ComponentMixture& cm) {
  ordered_json states = ordered_json::array();
  for (int z = 0; z < cm.num_states(); ++z) {
    const auto& s = cm.shape[z];
    const auto& m = cm.measurement[z];
    ordered_json st;
    st["mean"] = flat(s.mean);
    st["cov"] = flat(s.cov);
    st["measurement"] = {{"offset", flat(m.offset)}, {"gain", flat(m.gain)}, {"noise_cov", flat(m.noise_cov)}};
    require_finite(st["mean"].get<std::vector<double>>(), "shape mean");
    require_finite(st["cov"].get<std::vector<double>>(), "shape covariance");
    require_finite(flat(m.offset), "measurement offset");
    require_finite(flat(m.gain), "measurement gain");
    require_finite(flat(m.noise_cov), "measurement noise");
    states.push_back(std::move(st));
  }
  require_finite(flat(cm.log_prior), "log_prior");
  ordered_json out;
  out["num_states"] = cm.num_states();
  out["dim"] = cm.dim();
  out["log_prior"] = flat(cm.log_prior);
  out["states"] = std::move(states);
  return out;
}

ComponentMixture component_from_json(const json& j, const std::string& ctx) {
  const int k = field<int>(j, "num_states", ctx);
  const int d = field<int>(j, "dim", ctx);
  if (k < 1 || d < 1) fail(ErrorKind::SchemaViolation, ctx + ": num_states and dim must be positive");
  ComponentMixture cm;
  cm.log_prior = vector_field(j, "log_prior", k, ctx);
  const json states = field<json>(j, "states", ctx);
  if (!states.is_array() || static_cast<int>(states.size()) != k)
    fail(ErrorKind::SchemaViolation, ctx + ": field 'states' must list " + std::to_string(k) + " states");
  for (int z = 0; z < k; ++z) {
    const std::string sctx = ctx + " state " + std::to_string(z);
    const json& st = states[static_cast<std::size_t>(z)];
    cm.shape.push_back({vector_field(st, "mean", d, sctx), matrix_field(st, "cov", d, d, sctx)});
    const json meas = field<json>(st, "measurement", sctx);
    cm.measurement.push_back({vector_field(meas, "offset", d, sctx), matrix_field(meas, "gain", d, d, sctx),
                              matrix_field(meas, "noise_cov", d, d, sctx)});
  }
  return cm;
}

}  // namespace

std::string format_model(const HierarchicalModel& model) {
  model.validate();
  ordered_json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["cpt_layout"] = "rows indexed by parent values in node-list order, last parent fastest; one entry per node value";
  doc["expression_labels"] = model.expression_labels;
  doc["pose_labels"] = model.pose_labels;
  doc["partition"] = detail::partition_json(model.partition);
  doc["normalization"] = {{"left_eye", model.normalization.left_eye}, {"right_eye", model.normalization.right_eye}};

  const DiscreteNetwork& net = model.network;
  ordered_json nodes = ordered_json::array();
  for (int v = 0; v < net.num_nodes(); ++v) {
    std::vector<std::string> parents;
    for (int u : net.parent_list(v)) parents.push_back(net.name(u));
    nodes.push_back({{"name", net.name(v)}, {"cardinality", net.cardinality(v)}, {"parents", parents}, {"cpt", net.cpt(v)}});
  }
  doc["nodes"] = std::move(nodes);
  ordered_json edges = ordered_json::array();
  for (const auto& [p, c] : net.edges()) edges.push_back({net.name(p), net.name(c)});
  doc["edges"] = std::move(edges);

  ordered_json comps;
  for (Component c : kComponents) comps[std::string(to_string(c))] = component_json(model.component(c));
  doc["components"] = std::move(comps);

  ordered_json notes = ordered_json::object();
  for (const auto& [k, v] : model.metadata.notes) notes[k] = v;
  doc["metadata"] = {{"provenance", model.metadata.provenance}, {"seed", model.metadata.seed}, {"notes", notes}};
  return doc.dump(1) + "\n";
}

HierarchicalModel parse_model(std::string_view text, std::string_view source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ParseError, std::string(source) + ": " + e.what());
  }
  const std::string ctx(source);
  if (field<std::string>(doc, "format", ctx) != kFormat)
    fail(ErrorKind::SchemaViolation, ctx + ": field 'format' must be '" + kFormat + "'");
  if (field<int>(doc, "version", ctx) != kVersion) fail(ErrorKind::SchemaViolation, ctx + ": unsupported version");

  HierarchicalModel m;
  m.expression_labels = field<std::vector<std::string>>(doc, "expression_labels", ctx);
  m.pose_labels = field<std::vector<std::string>>(doc, "pose_labels", ctx);
  m.partition = detail::partition_from_json(field<json>(doc, "partition", ctx), ctx);
  const json norm = field<json>(doc, "normalization", ctx);
  m.normalization.left_eye = field<std::vector<int>>(norm, "left_eye", ctx);
  m.normalization.right_eye = field<std::vector<int>>(norm, "right_eye", ctx);

  const json nodes = field<json>(doc, "nodes", ctx);
  if (!nodes.is_array()) fail(ErrorKind::SchemaViolation, ctx + ": field 'nodes' must be an array");
  std::vector<std::string> names;
  std::vector<int> cards;
  std::vector<std::vector<double>> cpts;
  for (const auto& n : nodes) {
    names.push_back(field<std::string>(n, "name", ctx + " node"));
    cards.push_back(field<int>(n, "cardinality", ctx + " node " + names.back()));
    cpts.push_back(field<std::vector<double>>(n, "cpt", ctx + " node " + names.back()));
  }
  std::vector<ParentMask> parents(names.size(), 0);
  auto index_of_name = [&](const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    fail(ErrorKind::SchemaViolation, ctx + ": unknown node '" + name + "'");
  };
  std::size_t i = 0;
  for (const auto& n : nodes) {
    for (const auto& p : field<std::vector<std::string>>(n, "parents", ctx + " node " + names[i]))
      parents[i] |= 1u << index_of_name(p);
    ++i;
  }
  for (const auto& e : field<std::vector<std::vector<std::string>>>(doc, "edges", ctx)) {
    if (e.size() != 2) fail(ErrorKind::SchemaViolation, ctx + ": each edge must be a [parent, child] pair");
    if (!(parents[index_of_name(e[1])] & (1u << index_of_name(e[0]))))
      fail(ErrorKind::SchemaViolation, ctx + ": edge " + e[0] + " -> " + e[1] + " disagrees with node parents");
  }
  try {
    m.network = DiscreteNetwork(std::move(names), std::move(cards), std::move(parents), std::move(cpts));
  } catch (const Error& e) {
    fail(ErrorKind::SchemaViolation, ctx + ": " + e.what());
  }
  if (m.network.edges().size() != field<json>(doc, "edges", ctx).size())
    fail(ErrorKind::SchemaViolation, ctx + ": edge list disagrees with node parents");

  const json comps = field<json>(doc, "components", ctx);
  for (Component c : kComponents) {
    const std::string name(to_string(c));
    m.components[index_of(c)] = component_from_json(field<json>(comps, name.c_str(), ctx), ctx + " component " + name);
  }

  const json meta = field<json>(doc, "metadata", ctx);
  m.metadata.provenance = field<std::string>(meta, "provenance", ctx + " metadata");
  m.metadata.seed = field<std::uint64_t>(meta, "seed", ctx + " metadata");
  if (!field<json>(meta, "notes", ctx + " metadata").is_object())
    fail(ErrorKind::SchemaViolation, ctx + ": metadata notes must be an object");
  // Keep notes in document order.
  const nlohmann::ordered_json ordered = nlohmann::ordered_json::parse(text);
  for (const auto& [k, v] : ordered.at("metadata").at("notes").items()) {
    if (!v.is_string()) fail(ErrorKind::SchemaViolation, ctx + ": metadata note '" + k + "' must be a string");
    m.metadata.notes.emplace_back(k, v.get<std::string>());
  }

  try {
    m.validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CardinalityMismatch) throw;
    fail(ErrorKind::SchemaViolation, ctx + ": " + e.what());
  }
  return m;
}

void save_model(const HierarchicalModel& model, const std::filesystem::path& path) {
  const std::string text = format_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

HierarchicalModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::ParseError, "cannot open model file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str(), path.string());
}

}  // namespace hpm
