#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "cli_support.hpp"
#include "hpm/error.hpp"
#include "hpm/evaluate.hpp"
#include "hpm/synth.hpp"

using namespace hpm;
namespace fs = std::filesystem;

namespace {

const fs::path kFixture = HPM_FIXTURE_PATH;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::current_path() / "cli_scratch" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// CSV report row by method name -> overall error.
std::map<std::string, double> overall_by_method(const std::string& csv) {
  std::map<std::string, double> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string method, n, overall;
    std::getline(row, method, ',');
    std::getline(row, n, ',');
    std::getline(row, overall, ',');
    out[method] = std::stod(overall);
  }
  return out;
}

}  // namespace

TEST_CASE("train on the bundled fixture") {
  const fs::path dir = scratch("train");
  REQUIRE(fs::exists(kFixture));
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = testing::run_cli("train --data " + q(kFixture) + " --out " + q(dir / "m.json") + " --trace " +
                                      q(dir / "t.jsonl") + " --seed 3",
                                  dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(secs < 60.0);
  const HierarchicalModel m = load_model(dir / "m.json");
  CHECK_NOTHROW(m.validate());
  CHECK(r.out.find("expected_bic ") != std::string::npos);
  CHECK(r.out.find("edges:") != std::string::npos);
  const std::string trace = testing::slurp(dir / "t.jsonl");
  CHECK(trace.find("\"step\":\"init\"") != std::string::npos);
  CHECK(trace.find("\"convergence\"") != std::string::npos);
  CHECK(trace.find("seconds") == std::string::npos);

  // Rerun: identical bytes.
  const auto r2 = testing::run_cli("train --data " + q(kFixture) + " --out " + q(dir / "m2.json") + " --trace " +
                                       q(dir / "t2.jsonl") + " --seed 3",
                                   dir);
  REQUIRE(r2.code == 0);
  CHECK(testing::slurp(dir / "m.json") == testing::slurp(dir / "m2.json"));
  CHECK(testing::slurp(dir / "t.jsonl") == testing::slurp(dir / "t2.jsonl"));
  CHECK(r.out == r2.out);
}

TEST_CASE("error exit codes") {
  const fs::path dir = scratch("errors");
  const std::string missing = (dir / "no_such_file.jsonl").string();
  const auto r = testing::run_cli("train --data '" + missing + "' --out " + q(dir / "m.json") + " --seed 1", dir);
  CHECK(r.code == 10 + static_cast<int>(ErrorKind::ParseError));
  CHECK(r.code == 14);
  CHECK(r.err.find(missing) != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "m.json"));

  // Seeds are mandatory.
  CHECK(testing::run_cli("train --data " + q(kFixture) + " --out " + q(dir / "m.json"), dir).code == 2);
  CHECK(testing::run_cli("synth --n 5 --out " + q(dir / "d.jsonl"), dir).code == 2);
  CHECK(testing::run_cli("frobnicate", dir).code == 2);

  // Model and dataset disagree on the number of expressions.
  GeneratorSpec spec = generator_preset("structured");
  spec.expression_labels.push_back("anger");
  save_model(make_generator(spec), dir / "wide.json");
  const auto cm = testing::run_cli("detect --model " + q(dir / "wide.json") + " --data " + q(kFixture) + " --out " +
                                       q(dir / "det.csv"),
                                   dir);
  CHECK(cm.code == 10 + static_cast<int>(ErrorKind::CardinalityMismatch));
}

TEST_CASE("detect and evaluate agree with the library") {
  const fs::path dir = scratch("detect");
  REQUIRE(testing::run_cli("synth --preset structured --n 300 --seed 4 --out " + q(dir / "d.jsonl") +
                               " --write-generator " + q(dir / "g.json"),
                           dir)
              .code == 0);
  const auto det = testing::run_cli(
      "detect --model " + q(dir / "g.json") + " --data " + q(dir / "d.jsonl") + " --out " + q(dir / "det.csv"), dir);
  INFO(det.err);
  REQUIRE(det.code == 0);
  const std::string csv = testing::slurp(dir / "det.csv");
  CHECK(count_lines(csv) == 301);

  const auto ev = testing::run_cli(
      "evaluate --data " + q(dir / "d.jsonl") + " --detections " + q(dir / "det.csv") + " --out " + q(dir / "rep.csv"),
      dir);
  REQUIRE(ev.code == 0);

  const HierarchicalModel g = load_model(dir / "g.json");
  const Dataset d = load_dataset(dir / "d.jsonl");
  const auto dets = detect_all(g, d);
  CHECK(format_detections(dets, EstimatePolicy::PosteriorMean) == csv);
  DetectionFile f;
  for (const auto& x : dets) f.estimates.push_back(x.estimate);
  CHECK(format_report_csv(evaluate_detections(f, d)) == testing::slurp(dir / "rep.csv"));
  const auto overall = overall_by_method(testing::slurp(dir / "rep.csv"));
  CHECK(overall.at("posterior-mean") < overall.at("measurement"));
}

TEST_CASE("detect on nearly noiseless data returns the measurements") {
  const fs::path dir = scratch("noiseless");
  REQUIRE(testing::run_cli("synth --preset structured --n 50 --seed 5 --noise-sd 1e-5 --out " + q(dir / "d.jsonl") +
                               " --write-generator " + q(dir / "g.json"),
                           dir)
              .code == 0);
  REQUIRE(testing::run_cli("detect --model " + q(dir / "g.json") + " --data " + q(dir / "d.jsonl") + " --out " +
                               q(dir / "det.csv"),
                           dir)
              .code == 0);
  const Dataset d = load_dataset(dir / "d.jsonl");
  const DetectionFile f = load_detections(dir / "det.csv");
  double worst = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j)
    worst = std::max(worst, normalized_error(f.estimates[j], d.samples[j].truth,
                                             interocular_distance(d.samples[j].truth, d.normalization))
                                .per_point.maxCoeff());
  CHECK(worst < 1e-3);
}

TEST_CASE("clamping the true expression beats a wrong one on average") {
  const fs::path dir = scratch("clamp");
  REQUIRE(testing::run_cli("synth --preset structured --n 1000 --seed 6 --out " + q(dir / "d.jsonl") +
                               " --write-generator " + q(dir / "g.json"),
                           dir)
              .code == 0);
  const std::string base = "detect --model " + q(dir / "g.json") + " --data " + q(dir / "d.jsonl");
  REQUIRE(testing::run_cli(base + " --clamp-expression truth --out " + q(dir / "truth.csv"), dir).code == 0);
  const Dataset d = load_dataset(dir / "d.jsonl");
  std::vector<std::vector<double>> by_label;
  auto evidences = [](const std::string& csv) {
    std::vector<double> ev;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) ev.push_back(std::stod(line.substr(line.rfind(',') + 1)));
    return ev;
  };
  for (const auto& label : d.expression_labels) {
    const fs::path out = dir / (label + ".csv");
    REQUIRE(testing::run_cli(base + " --clamp-expression " + label + " --out " + q(out), dir).code == 0);
    by_label.push_back(evidences(testing::slurp(out)));
  }
  const auto truth = evidences(testing::slurp(dir / "truth.csv"));
  REQUIRE(truth.size() == d.size());
  double right = 0.0, wrong = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    const int e = d.samples[j].expression;
    CHECK(truth[j] == by_label[e][j]);
    right += truth[j];
    wrong += by_label[(e + 1) % d.num_expressions()][j];
  }
  CHECK(right >= wrong);
}

TEST_CASE("evaluate examples") {
  const fs::path dir = scratch("evaluate");
  const Dataset d = load_dataset(kFixture);
  std::vector<Detection> exact, shifted;
  std::vector<double> expected;
  for (const auto& s : d.samples) {
    Detection a;
    a.estimate = s.truth;
    exact.push_back(a);
    Vector c = s.truth.coords();
    for (int i = 0; i < kNumPoints; ++i) c[2 * i] += 0.01;
    a.estimate = LandmarkSet(c);
    shifted.push_back(a);
    expected.push_back(0.01 / interocular_distance(s.truth, d.normalization));
  }
  save_detections(exact, EstimatePolicy::PosteriorMean, dir / "exact.csv");
  save_detections(shifted, EstimatePolicy::PosteriorMean, dir / "shift.csv");
  REQUIRE(testing::run_cli("evaluate --data " + q(kFixture) + " --detections " + q(dir / "exact.csv") + " --out " +
                               q(dir / "a.csv"),
                           dir)
              .code == 0);
  CHECK(overall_by_method(testing::slurp(dir / "a.csv")).at("posterior-mean") == 0.0);
  REQUIRE(testing::run_cli("evaluate --data " + q(kFixture) + " --detections " + q(dir / "shift.csv") + " --out " +
                               q(dir / "b.csv"),
                           dir)
              .code == 0);
  double mean = 0.0;
  for (double e : expected) mean += e / static_cast<double>(expected.size());
  CHECK(overall_by_method(testing::slurp(dir / "b.csv")).at("posterior-mean") == doctest::Approx(mean).epsilon(1e-12));

  // Detections for a different number of samples.
  exact.pop_back();
  save_detections(exact, EstimatePolicy::PosteriorMean, dir / "short.csv");
  CHECK(testing::run_cli("evaluate --data " + q(kFixture) + " --detections " + q(dir / "short.csv"), dir).code ==
        10 + static_cast<int>(ErrorKind::DimensionMismatch));
}

TEST_CASE("ten-fold evaluation beats raw measurements") {
  const fs::path dir = scratch("kfold");
  REQUIRE(testing::run_cli("synth --preset structured --n 2000 --seed 7 --out " + q(dir / "d.jsonl"), dir).code == 0);
  const auto r = testing::run_cli("evaluate --data " + q(dir / "d.jsonl") + " --kfold 10 --seed 2 --out " +
                                      q(dir / "rep.csv"),
                                  dir);
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto overall = overall_by_method(testing::slurp(dir / "rep.csv"));
  CHECK(overall.at("posterior-mean") < overall.at("measurement"));
  CHECK(overall.at("max-weight-mean") < overall.at("measurement"));
  CHECK(testing::run_cli("evaluate --data " + q(dir / "d.jsonl") + " --kfold 10", dir).code ==
        10 + static_cast<int>(ErrorKind::InvalidArgument));
}

TEST_CASE("sample and inspect") {
  const fs::path dir = scratch("inspect");
  save_model(make_generator(generator_preset("empty")), dir / "empty.json");
  const auto s0 = testing::run_cli("sample --model " + q(dir / "empty.json") +
                                       " --component mouth --state 1 --n 0 --seed 1 --out " + q(dir / "s0.csv"),
                                   dir);
  REQUIRE(s0.code == 0);
  const std::string header = testing::slurp(dir / "s0.csv");
  CHECK(count_lines(header) == 1);
  CHECK(header == "sample,x20,y20,x21,y21,x22,y22,x23,y23,x24,y24,x25,y25\n");

  REQUIRE(testing::run_cli("sample --model " + q(dir / "empty.json") +
                               " --component mouth --state 1 --n 5 --seed 1 --out " + q(dir / "s5.csv"),
                           dir)
              .code == 0);
  CHECK(count_lines(testing::slurp(dir / "s5.csv")) == 6);
  CHECK(testing::run_cli("sample --model " + q(dir / "empty.json") + " --component mouth --state 7 --n 1 --seed 1 --out " +
                             q(dir / "bad.csv"),
                         dir)
            .code == 10 + static_cast<int>(ErrorKind::IndexOutOfRange));

  const auto r = testing::run_cli("inspect --model " + q(dir / "empty.json") + " --csv " + q(dir / "i.csv"), dir);
  REQUIRE(r.code == 0);
  const auto t = testing::parse_long_csv(testing::slurp(dir / "i.csv"));
  REQUIRE(t.count("P(Z_mouth|E)"));
  CHECK(testing::max_column_tv(t.at("P(Z_mouth|E)")) == 0.0);
  CHECK(t.count("edge") == 0);
  CHECK(r.out.find("P(Z_eye,Z_mouth)") != std::string::npos);
}

TEST_CASE("synth, train, inspect on a coupled generator") {
  const fs::path dir = scratch("coupled");
  REQUIRE(testing::run_cli("synth --preset structured --n 2000 --seed 8 --out " + q(dir / "d.jsonl"), dir).code == 0);
  REQUIRE(testing::run_cli("train --data " + q(dir / "d.jsonl") + " --out " + q(dir / "m.json") + " --seed 8", dir)
              .code == 0);
  REQUIRE(testing::run_cli("inspect --model " + q(dir / "m.json") + " --csv " + q(dir / "i.csv"), dir).code == 0);
  const auto t = testing::parse_long_csv(testing::slurp(dir / "i.csv"));
  CHECK(testing::max_column_tv(t.at("P(Z_mouth|E)")) >= 0.3);
  CHECK(testing::max_column_tv(t.at("P(Z_eye|E)")) < 0.1);
}

TEST_CASE("config file with flag overrides") {
  const fs::path dir = scratch("config");
  {
    std::ofstream cfg(dir / "run.toml");
    cfg << "[synth]\npreset = \"empty\"\nn = 7\nseed = 3\n";
  }
  REQUIRE(testing::run_cli("--config " + q(dir / "run.toml") + " synth --out " + q(dir / "a.jsonl"), dir).code == 0);
  CHECK(load_dataset(dir / "a.jsonl").size() == 7);
  REQUIRE(testing::run_cli("--config " + q(dir / "run.toml") + " synth --n 4 --out " + q(dir / "b.jsonl"), dir).code == 0);
  CHECK(load_dataset(dir / "b.jsonl").size() == 4);
  CHECK(load_dataset(dir / "a.jsonl") == synthesize(make_generator(generator_preset("empty")), 7, 3));
}
