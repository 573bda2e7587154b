#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hpm/error.hpp"
#include "hpm/shape_data.hpp"
#include "json_util.hpp"

namespace hpm {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "hpm-dataset";
constexpr int kVersion = 1;

json partition_to_json(const ComponentPartition& p) {
  json out = json::object();
  for (Component c : kComponents) out[std::string(to_string(c))] = p.points(c);
  return out;
}

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

template <typename T>
T field(const json& obj, const char* name, const std::string& context) {
  const auto it = obj.find(name);
  if (it == obj.end()) fail(ErrorKind::SchemaViolation, context + ": missing field '" + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::SchemaViolation, context + ": field '" + name + "' has the wrong type");
  }
}

LandmarkSet coords_field(const json& rec, const char* name, const std::string& context) {
  const auto values = field<std::vector<double>>(rec, name, context);
  if (values.size() != static_cast<std::size_t>(kNumCoords))
    fail(ErrorKind::SchemaViolation, context + ": field '" + name + "' has " + std::to_string(values.size()) +
                                         " values, expected " + std::to_string(kNumCoords));
  Vector v = Eigen::Map<const Vector>(values.data(), kNumCoords);
  if (!v.allFinite()) fail(ErrorKind::SchemaViolation, context + ": field '" + name + "' has non-finite values");
  return LandmarkSet(std::move(v));
}

}  // namespace

namespace detail {

ComponentPartition partition_from_json(const json& j, const std::string& context) {
  if (!j.is_object()) fail(ErrorKind::SchemaViolation, context + ": partition must be an object");
  std::array<std::vector<int>, kNumComponents> idx;
  for (Component c : kComponents) idx[index_of(c)] = field<std::vector<int>>(j, std::string(to_string(c)).c_str(), context);
  try {
    return ComponentPartition(std::move(idx));
  } catch (const Error& e) {
    fail(ErrorKind::SchemaViolation, context + ": " + e.what());
  }
}

json partition_json(const ComponentPartition& p) { return partition_to_json(p); }

}  // namespace detail

std::string format_dataset(const Dataset& dataset) {
  json header = {
      {"format", kFormat},
      {"version", kVersion},
      {"num_points", kNumPoints},
      {"expression_labels", dataset.expression_labels},
      {"pose_labels", dataset.pose_labels},
      {"partition", partition_to_json(dataset.partition)},
      {"normalization",
       {{"left_eye", dataset.normalization.left_eye},
        {"right_eye", dataset.normalization.right_eye},
        {"origin", "eye_midpoint"},
        {"scale", "interocular"}}},
  };
  std::ostringstream out;
  out << header.dump() << '\n';
  for (const auto& s : dataset.samples) {
    const Vector& t = s.truth.coords();
    const Vector& m = s.measurement.coords();
    json rec = {
        {"truth", std::vector<double>(t.data(), t.data() + t.size())},
        {"measurement", std::vector<double>(m.data(), m.data() + m.size())},
        {"expression", s.expression},
        {"pose", s.pose},
    };
    out << rec.dump() << '\n';
  }
  return out.str();
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << format_dataset(dataset);
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

Dataset parse_dataset(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;

  auto next_nonempty = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };

  auto parse_line = [&]() -> json {
    try {
      return json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::ParseError, where(source, line_no) + ": " + e.what());
    }
  };

  if (!next_nonempty()) fail(ErrorKind::ParseError, std::string(source) + ": empty dataset file");
  const json header = parse_line();
  const std::string hctx = where(source, line_no) + " header";
  if (!header.is_object()) fail(ErrorKind::SchemaViolation, hctx + ": expected an object");
  if (field<std::string>(header, "format", hctx) != kFormat)
    fail(ErrorKind::SchemaViolation, hctx + ": field 'format' must be '" + kFormat + "'");
  if (field<int>(header, "version", hctx) != kVersion)
    fail(ErrorKind::SchemaViolation, hctx + ": unsupported version");
  if (field<int>(header, "num_points", hctx) != kNumPoints)
    fail(ErrorKind::SchemaViolation, hctx + ": field 'num_points' must be " + std::to_string(kNumPoints));

  Dataset d;
  d.expression_labels = field<std::vector<std::string>>(header, "expression_labels", hctx);
  d.pose_labels = field<std::vector<std::string>>(header, "pose_labels", hctx);
  if (d.expression_labels.empty() || d.pose_labels.empty())
    fail(ErrorKind::SchemaViolation, hctx + ": label lists must be non-empty");
  d.partition = detail::partition_from_json(field<json>(header, "partition", hctx), hctx);
  const json norm = field<json>(header, "normalization", hctx);
  d.normalization.left_eye = field<std::vector<int>>(norm, "left_eye", hctx);
  d.normalization.right_eye = field<std::vector<int>>(norm, "right_eye", hctx);
  try {
    d.normalization.validate();
  } catch (const Error& e) {
    fail(ErrorKind::SchemaViolation, hctx + ": " + e.what());
  }

  std::size_t record = 0;
  while (next_nonempty()) {
    const json rec = parse_line();
    const std::string ctx = "record " + std::to_string(record) + " (" + where(source, line_no) + ")";
    if (!rec.is_object()) fail(ErrorKind::SchemaViolation, ctx + ": expected an object");
    AnnotatedSample s;
    s.truth = coords_field(rec, "truth", ctx);
    s.measurement = coords_field(rec, "measurement", ctx);
    s.expression = field<int>(rec, "expression", ctx);
    s.pose = field<int>(rec, "pose", ctx);
    if (s.expression < 0 || s.expression >= d.num_expressions())
      fail(ErrorKind::CardinalityMismatch, ctx + ": field 'expression' = " + std::to_string(s.expression) +
                                               " outside [0, " + std::to_string(d.num_expressions()) + ")");
    if (s.pose < 0 || s.pose >= d.num_poses())
      fail(ErrorKind::CardinalityMismatch, ctx + ": field 'pose' = " + std::to_string(s.pose) + " outside [0, " +
                                               std::to_string(d.num_poses()) + ")");
    d.samples.push_back(std::move(s));
    ++record;
  }
  if (d.samples.empty()) fail(ErrorKind::EmptyInput, std::string(source) + ": dataset has no records");
  return d;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::ParseError, "cannot open dataset file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), path.string());
}

}  // namespace hpm
