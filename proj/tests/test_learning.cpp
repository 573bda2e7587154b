#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "hpm/error.hpp"
#include "hpm/learning.hpp"
#include "hpm/synth.hpp"
#include "support.hpp"

using namespace hpm;

namespace {

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::InvalidArgument;
}

// Expected counts when the hidden states are known.
std::vector<double> hard_counts(const Dataset& d, const std::vector<std::array<int, kNumComponents>>& states,
                                const std::vector<int>& cards) {
  const ConfigSpace space(cards);
  std::vector<double> counts(space.size(), 0.0);
  std::vector<int> cfg(kNumGlobalNodes);
  for (std::size_t j = 0; j < d.size(); ++j) {
    cfg[0] = d.samples[j].expression;
    cfg[1] = d.samples[j].pose;
    for (std::size_t c = 0; c < kNumComponents; ++c) cfg[2 + c] = states[j][c];
    counts[space.index(cfg)] += 1.0;
  }
  return counts;
}

std::set<std::pair<std::string, std::string>> named_edges(const std::vector<ParentMask>& parents) {
  std::set<std::pair<std::string, std::string>> out;
  for (auto [p, c] : testing::sorted_edges(parents)) out.emplace(global_node_names()[p], global_node_names()[c]);
  return out;
}

// Log of every (z-config) term for one sample, nested loops.
std::vector<long double> oracle_state_terms(const HierarchicalModel& m, const AnnotatedSample& s) {
  std::vector<long double> out;
  std::vector<int> cfg(kNumGlobalNodes);
  cfg[0] = s.expression;
  cfg[1] = s.pose;
  const auto& k = m.network.cardinalities();
  for (cfg[2] = 0; cfg[2] < k[2]; ++cfg[2])
    for (cfg[3] = 0; cfg[3] < k[3]; ++cfg[3])
      for (cfg[4] = 0; cfg[4] < k[4]; ++cfg[4])
        for (cfg[5] = 0; cfg[5] < k[5]; ++cfg[5]) {
          long double lp = 0.0L;
          for (int v = 0; v < kNumGlobalNodes; ++v)
            lp += std::log(static_cast<long double>(std::max(testing::cpt_value(m.network, v, cfg), kProbabilityFloor)));
          for (Component c : kComponents) {
            const auto& cm = m.component(c);
            const int z = cfg[z_node(c)];
            const Vector x = m.partition.extract(s.truth.coords(), c);
            const Vector xm = m.partition.extract(s.measurement.coords(), c);
            lp += testing::direct_log_normal(cm.shape[z].mean, cm.shape[z].cov, x) +
                  testing::direct_log_normal(cm.measurement[z].offset + cm.measurement[z].gain * x,
                                             cm.measurement[z].noise_cov, xm);
          }
          out.push_back(lp);
        }
  return out;
}

Matrix blobs(int k, int per, double sep, std::mt19937_64& rng, std::vector<int>& labels) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix pts(k * per, 4);
  labels.clear();
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < per; ++i) {
      for (int j = 0; j < 4; ++j) pts(c * per + i, j) = g(rng) + (j == c % 4 ? sep * (1 + c / 4) : 0.0);
      labels.push_back(c);
    }
  return pts;
}

}  // namespace

TEST_CASE("kmeans recovers well separated clusters") {
  std::mt19937_64 rng(1);
  for (int k : {2, 3, 5}) {
    std::vector<int> labels;
    const Matrix pts = blobs(k, 60, 12.0, rng, labels);
    const KMeansResult r = kmeans(pts, k, 10, 7);
    Matrix cost = Matrix::Zero(k, k);
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (int c = 0; c < k; ++c) cost(labels[i], c) += r.assignment[i] == c ? 0.0 : 1.0;
    const auto perm = testing::best_matching(cost);
    int errors = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) errors += r.assignment[i] != perm[labels[i]];
    CHECK(errors == 0);
  }
}

TEST_CASE("kmeans trivial cases") {
  std::mt19937_64 rng(2);
  std::vector<int> labels;
  const Matrix pts = blobs(3, 40, 8.0, rng, labels);
  const KMeansResult one = kmeans(pts, 1, 3, 1);
  CHECK((one.centers.row(0) - pts.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
  for (int a : one.assignment) CHECK(a == 0);

  Matrix twice(pts.rows() * 2, pts.cols());
  twice << pts, pts;
  const KMeansResult a = kmeans(pts, 3, 10, 5);
  const KMeansResult b = kmeans(twice, 3, 10, 5);
  CHECK(b.distortion == doctest::Approx(2 * a.distortion).epsilon(1e-9));

  CHECK(kind_of([&] { kmeans(pts, 0, 1, 1); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { kmeans(pts.topRows(2), 3, 1, 1); }) == ErrorKind::TooFewSamples);
}

TEST_CASE("init_states fits complete-data parameters") {
  GeneratorSpec spec = generator_preset("structured");
  spec.state_separation = 0.3;
  std::vector<std::array<int, kNumComponents>> truth_states;
  const HierarchicalModel gen = make_generator(spec);
  const Dataset d = synthesize(gen, 600, 4, &truth_states);
  LearnConfig cfg;
  cfg.seed = 3;
  const InitResult init = init_states(d, cfg);
  CHECK(init.model.network.edges().empty());
  const auto data = component_data(d);
  for (Component c : kComponents) {
    const auto& as = init.assignments[index_of(c)];
    // Recovered clusters agree with the generator up to relabeling.
    Matrix cost = Matrix::Zero(3, 3);
    for (std::size_t j = 0; j < d.size(); ++j)
      for (int z = 0; z < 3; ++z) cost(truth_states[j][index_of(c)], z) += as[j] == z ? 0.0 : 1.0;
    const auto perm = testing::best_matching(cost);
    int errors = 0;
    for (std::size_t j = 0; j < d.size(); ++j) errors += as[j] != perm[truth_states[j][index_of(c)]];
    CHECK(errors == 0);

    // Per-cluster sample mean.
    const auto& cm = init.model.component(c);
    for (int z = 0; z < 3; ++z) {
      Vector sum = Vector::Zero(cm.dim());
      int n = 0;
      for (std::size_t j = 0; j < d.size(); ++j)
        if (as[j] == z) {
          sum += data[index_of(c)].truth.row(static_cast<Eigen::Index>(j)).transpose();
          ++n;
        }
      CHECK((cm.shape[z].mean - sum / n).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  Dataset tiny = d.subset({0, 1});
  CHECK(kind_of([&] { init_states(tiny, cfg); }) == ErrorKind::TooFewSamples);
}

TEST_CASE("e_step matches brute-force Bayes enumeration") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const HierarchicalModel m = testing::random_model(rng);
    const Dataset d = synthesize(m, 8, 100 + t);
    const Expectations ex = e_step(m, d);
    REQUIRE(ex.posteriors.size() == d.size());
    long double total = 0.0L;
    for (std::size_t j = 0; j < d.size(); ++j) {
      const auto terms = oracle_state_terms(m, d.samples[j]);
      const long double norm = testing::oracle_logsumexp(terms);
      total += norm;
      const auto& lt = ex.posteriors[j].log_table();
      REQUIRE(lt.size() == terms.size());
      for (std::size_t i = 0; i < terms.size(); ++i) CHECK(std::abs(lt[i] - static_cast<double>(terms[i] - norm)) < 1e-10);
    }
    CHECK(std::abs(ex.log_likelihood - static_cast<double>(total)) < 1e-9 * std::max(1.0L, std::abs(total)));
    double mass = 0.0;
    for (double c : ex.expected_counts) mass += c;
    CHECK(mass == doctest::Approx(static_cast<double>(d.size())).epsilon(1e-12));
    for (const auto& r : ex.responsibilities) CHECK((r.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("e_step special structures") {
  // Empty graph: the joint posterior is the product of per-component responsibilities.
  const HierarchicalModel flat = make_generator(generator_preset("empty"));
  const Dataset d = synthesize(flat, 20, 2);
  const Expectations ex = e_step(flat, d);
  for (std::size_t j = 0; j < d.size(); ++j) {
    const auto& post = ex.posteriors[j];
    std::array<Vector, kNumComponents> resp;
    for (Component c : kComponents) {
      ComponentMixture cm = flat.component(c);
      const auto& cpt = flat.network.cpt(z_node(c));
      for (int z = 0; z < cm.num_states(); ++z) cm.log_prior[z] = std::log(cpt[z]);
      resp[index_of(c)] = responsibilities(cm, flat.partition.extract(d.samples[j].truth.coords(), c),
                                           flat.partition.extract(d.samples[j].measurement.coords(), c));
    }
    for (std::size_t i = 0; i < post.log_table().size(); ++i) {
      double sum = 0.0;
      for (std::size_t c = 0; c < kNumComponents; ++c) sum += resp[c][post.space().digit(i, static_cast<int>(c))];
      CHECK(std::abs(post.log_table()[i] - sum) < 1e-10);
    }
  }

  // Deterministic E -> Z_mouth: all mass on the forced state.
  GeneratorSpec spec = generator_preset("structured");
  spec.cpt_strength = 1.0;
  const HierarchicalModel det = make_generator(spec);
  const Dataset dd = synthesize(det, 30, 3);
  const Expectations dx = e_step(det, dd);
  for (std::size_t j = 0; j < dd.size(); ++j)
    CHECK(dx.responsibilities[index_of(Component::Mouth)](static_cast<Eigen::Index>(j), dd.samples[j].expression) >
          1.0 - 1e-9);
}

TEST_CASE("m_step closed forms") {
  GeneratorSpec spec = generator_preset("structured");
  const HierarchicalModel gen = make_generator(spec);
  std::vector<std::array<int, kNumComponents>> states;
  const Dataset d = synthesize(gen, 400, 6, &states);
  const auto data = component_data(d);
  LearnConfig cfg;

  SUBCASE("hard posteriors give per-cluster ML fits") {
    Expectations ex;
    ex.n = d.size();
    ex.expected_counts = hard_counts(d, states, gen.network.cardinalities());
    for (Component c : kComponents) {
      Matrix r = Matrix::Zero(static_cast<Eigen::Index>(d.size()), 3);
      for (std::size_t j = 0; j < d.size(); ++j) r(static_cast<Eigen::Index>(j), states[j][index_of(c)]) = 1.0;
      ex.responsibilities[index_of(c)] = r;
    }
    const MStepResult out = m_step(d, ex, gen.network.parent_masks(), cfg, gen);
    CHECK(out.warnings.empty());
    for (Component c : kComponents) {
      const auto& cm = out.model.component(c);
      const auto& cd = data[index_of(c)];
      for (int z = 0; z < 3; ++z) {
        std::vector<Eigen::Index> rows;
        for (std::size_t j = 0; j < d.size(); ++j)
          if (states[j][index_of(c)] == z) rows.push_back(static_cast<Eigen::Index>(j));
        const double n = static_cast<double>(rows.size());
        Vector mu = Vector::Zero(cm.dim());
        for (auto j : rows) mu += cd.truth.row(j).transpose();
        mu /= n;
        Matrix cov = Matrix::Zero(cm.dim(), cm.dim());
        Matrix q = Matrix::Zero(cm.dim(), cm.dim());
        for (auto j : rows) {
          const Vector a = cd.truth.row(j).transpose() - mu;
          const Vector r = (cd.measurement.row(j) - cd.truth.row(j)).transpose();
          cov += a * a.transpose();
          q += r * r.transpose();
        }
        CHECK((cm.shape[z].mean - mu).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((cm.shape[z].cov - cov / n).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((cm.measurement[z].noise_cov - q / n).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(cm.measurement[z].gain.isIdentity(0.0));
      }
    }
    // CPTs: smoothed relative frequencies.
    const auto& cpt = out.model.network.cpt(kNodeExpression);
    for (int e = 0; e < 3; ++e) {
      double cnt = 0.0;
      for (const auto& s : d.samples) cnt += s.expression == e;
      CHECK(cpt[e] == doctest::Approx((cnt + 1e-3) / (400 + 3e-3)).epsilon(1e-12));
    }
  }

  SUBCASE("identical states receive identical parameters") {
    HierarchicalModel twin = make_generator(generator_preset("empty"));
    for (auto& cm : twin.components) {
      cm.shape[1] = cm.shape[0];
      cm.measurement[1] = cm.measurement[0];
    }
    const Expectations ex = e_step(twin, d);
    const MStepResult out = m_step(d, ex, twin.network.parent_masks(), cfg, twin);
    for (const auto& cm : out.model.components) {
      CHECK((cm.shape[0].mean - cm.shape[1].mean).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((cm.shape[0].cov - cm.shape[1].cov).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((cm.measurement[0].noise_cov - cm.measurement[1].noise_cov).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SUBCASE("single tied state: noise is the residual second moment") {
    GeneratorSpec s1 = generator_preset("empty");
    s1.num_states = {1, 1, 1, 1};
    const HierarchicalModel one = make_generator(s1);
    const Dataset d1 = synthesize(one, 300, 9);
    const auto data1 = component_data(d1);
    const MStepResult out = m_step(d1, e_step(one, d1), one.network.parent_masks(), cfg, one);
    for (Component c : kComponents) {
      const auto& cd = data1[index_of(c)];
      const Matrix r = cd.measurement - cd.truth;
      const Matrix q = (r.transpose() * r) / static_cast<double>(r.rows());
      CHECK((out.model.component(c).measurement[0].noise_cov - q).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SUBCASE("untied regression recovers the generating gain") {
    LearnConfig untied = cfg;
    untied.beta_tied = false;
    const Dataset big = synthesize(gen, 4000, 10, &states);
    Expectations ex;
    ex.n = big.size();
    ex.expected_counts = hard_counts(big, states, gen.network.cardinalities());
    for (Component c : kComponents) {
      Matrix r = Matrix::Zero(static_cast<Eigen::Index>(big.size()), 3);
      for (std::size_t j = 0; j < big.size(); ++j) r(static_cast<Eigen::Index>(j), states[j][index_of(c)]) = 1.0;
      ex.responsibilities[index_of(c)] = r;
    }
    const MStepResult out = m_step(big, ex, gen.network.parent_masks(), untied, gen);
    // Gains are identity in the generator; with ~1300 samples per state the
    // least-squares estimate lands close.
    for (const auto& cm : out.model.components)
      for (const auto& m : cm.measurement) CHECK((m.gain - Matrix::Identity(cm.dim(), cm.dim())).norm() < 2.0);
  }

  SUBCASE("degenerate states keep their previous parameters") {
    Expectations ex = e_step(gen, d);
    ex.responsibilities[0].col(2).setZero();
    ex.responsibilities[0].col(0) = Vector::Ones(static_cast<Eigen::Index>(d.size())) - ex.responsibilities[0].col(1);
    const MStepResult out = m_step(d, ex, gen.network.parent_masks(), cfg, gen);
    REQUIRE(!out.warnings.empty());
    CHECK(out.model.components[0].shape[2].mean == gen.components[0].shape[2].mean);
  }
}

TEST_CASE("expected_bic examples") {
  std::mt19937_64 rng(11);
  const HierarchicalModel m = testing::random_model(rng);
  const Dataset d = synthesize(m, 12, 1);

  const Dataset single = d.subset({0});
  const ScoreReport s1 = expected_bic(m, single, e_step(m, single), true);
  CHECK(s1.penalty == 0.0);
  CHECK(s1.expected_bic == s1.expected_loglik);

  const ScoreReport base = expected_bic(m, d, e_step(m, d), true);
  Dataset twice = d;
  twice.samples.insert(twice.samples.end(), d.samples.begin(), d.samples.end());
  const ScoreReport dbl = expected_bic(m, twice, e_step(m, twice), true);
  CHECK(dbl.expected_loglik == doctest::Approx(2 * base.expected_loglik).epsilon(1e-12));
  CHECK(dbl.penalty == doctest::Approx(0.5 * std::log(24.0) * static_cast<double>(base.dim)).epsilon(1e-14));
  CHECK(std::abs(base.expected_bic - (base.expected_loglik - 0.5 * std::log(12.0) * base.dim)) < 1e-9);

  // Hand computation: sum over samples and configurations of posterior times log joint.
  long double q = 0.0L;
  for (const auto& s : d.samples) {
    const auto terms = oracle_state_terms(m, s);
    const long double norm = testing::oracle_logsumexp(terms);
    for (auto t : terms) q += std::exp(t - norm) * t;
  }
  CHECK(std::abs(base.expected_loglik - static_cast<double>(q)) < 1e-9 * std::max(1.0L, std::abs(q)));

  // Dimension: CPT entries plus per-state continuous parameters.
  std::size_t dim = m.network.num_free_parameters();
  for (const auto& cm : m.components) {
    const std::size_t dd = static_cast<std::size_t>(cm.dim());
    dim += static_cast<std::size_t>(cm.num_states()) * (dd + dd * (dd + 1) / 2 + dd * (dd + 1) / 2);
  }
  CHECK(base.dim == dim);
}

TEST_CASE("structure score decomposes into family scores") {
  std::mt19937_64 rng(12);
  std::gamma_distribution<double> gam(0.7, 3.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<int> cards(5);
    for (int& c : cards) c = std::uniform_int_distribution<int>(1, 3)(rng);
    const ConfigSpace space(cards);
    std::vector<double> table(space.size());
    double n = 0.0;
    for (double& x : table) n += (x = gam(rng));
    const auto parents = testing::random_dag(5, 0.4, rng);
    double sum = 0.0, oracle = 0.0;
    for (int v = 0; v < 5; ++v) {
      const double f = family_score(table, space, v, parents[v], n, 1e-3);
      const double o = testing::oracle_family_score(table, cards, v, parents[v], n, 1e-3);
      CHECK(std::abs(f - o) < 1e-9 * std::max(1.0, std::abs(o)));
      sum += f;
      oracle += o;
    }
    const double whole = structure_score(table, space, parents, n, 1e-3);
    CHECK(std::abs(whole - sum) < 1e-9 * std::max(1.0, std::abs(sum)));
    CHECK(std::abs(whole - oracle) < 1e-9 * std::max(1.0, std::abs(oracle)));
  }
}

TEST_CASE("structure_search matches brute-force DAG enumeration") {
  std::mt19937_64 rng(13);
  std::gamma_distribution<double> gam(0.5, 4.0);
  for (int t = 0; t < 25; ++t) {
    CAPTURE(t);
    const int nodes = t < 15 ? 4 : 3;
    std::vector<int> cards(nodes);
    for (int& c : cards) c = std::uniform_int_distribution<int>(2, 3)(rng);
    const ConfigSpace space(cards);
    std::vector<double> table(space.size());
    double n = 0.0;
    // Correlated counts so that edges pay off sometimes.
    const auto gen = testing::random_network(cards, testing::random_dag(nodes, 0.6, rng), rng);
    std::vector<int> cfg(nodes);
    for (std::size_t i = 0; i < table.size(); ++i) {
      space.decode(i, cfg);
      double p = 1.0;
      for (int v = 0; v < nodes; ++v) p *= testing::cpt_value(gen, v, cfg);
      n += (table[i] = 200.0 * p + gam(rng));
    }
    StructureConstraints cons = StructureConstraints::preset(StructurePreset::Permissive, nodes);
    if (t % 3 == 1)
      for (auto& f : cons.forbidden) f = static_cast<ParentMask>(std::uniform_int_distribution<int>(0, (1 << nodes) - 1)(rng));
    for (int v = 0; v < nodes; ++v) cons.forbidden[v] &= ~(1u << v);

    const auto got = structure_search(table, space, n, cons, 1e-3);
    const auto want = testing::brute_force_structure(table, cards, cons.forbidden, n, 1e-3);
    CHECK(testing::is_acyclic(got));
    for (int v = 0; v < nodes; ++v) CHECK((got[v] & cons.forbidden[v]) == 0);
    const double score = structure_score(table, space, got, n, 1e-3);
    CHECK(std::abs(score - want.best) < 1e-9 * std::max(1.0, std::abs(want.best)));
    CHECK(got == want.structure);
  }
}

TEST_CASE("structure_search tie-break and limits") {
  // A <-> B are score equivalent; the smaller edge list (0,1) wins.
  const ConfigSpace two({2, 2});
  const std::vector<double> table{40, 10, 10, 40};
  const auto cons = StructureConstraints::preset(StructurePreset::Permissive, 2);
  const auto a = structure_search(table, two, 100, cons, 1e-3);
  CHECK(a == std::vector<ParentMask>{0, 1u});
  for (int i = 0; i < 5; ++i) CHECK(structure_search(table, two, 100, cons, 1e-3) == a);
  CHECK(std::abs(structure_score(table, two, {2u, 0}, 100, 1e-3) - structure_score(table, two, a, 100, 1e-3)) < 1e-9);

  const ConfigSpace nine(std::vector<int>(9, 2));
  CHECK(kind_of([&] {
    structure_search(std::vector<double>(nine.size(), 1.0), nine, 512, StructureConstraints::preset(StructurePreset::Permissive, 9), 1e-3);
  }) == ErrorKind::TooManyNodes);

  const auto empty = StructureConstraints::preset(StructurePreset::Empty);
  for (int c = 0; c < kNumGlobalNodes; ++c)
    for (int p = 0; p < kNumGlobalNodes; ++p) CHECK_FALSE(empty.allows(p, c));
  const auto def = StructureConstraints::preset(StructurePreset::Default);
  CHECK_FALSE(def.allows(kNodeExpression + 2, kNodeExpression));
  CHECK(def.allows(kNodeExpression, kNodePose));
  CHECK(def.allows(2, 5));
  CHECK(structure_preset_from_string("permissive") == StructurePreset::Permissive);
  CHECK(kind_of([] { structure_preset_from_string("greedy"); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("structure_search on synthetic hidden states") {
  std::vector<std::array<int, kNumComponents>> states;
  const auto cons = StructureConstraints::preset(StructurePreset::Default);

  const HierarchicalModel indep = make_generator(generator_preset("empty"));
  const Dataset di = synthesize(indep, 5000, 21, &states);
  const ConfigSpace space(indep.network.cardinalities());
  const auto got = structure_search(hard_counts(di, states, indep.network.cardinalities()), space, 5000, cons, 1e-3);
  CHECK(named_edges(got).empty());

  GeneratorSpec spec = generator_preset("empty");
  spec.edges = {{"E", "Z_mouth"}};
  const HierarchicalModel em = make_generator(spec);
  const Dataset de = synthesize(em, 5000, 22, &states);
  const auto got2 = structure_search(hard_counts(de, states, em.network.cardinalities()), space, 5000, cons, 1e-3);
  CHECK(named_edges(got2) == std::set<std::pair<std::string, std::string>>{{"E", "Z_mouth"}});
}

TEST_CASE("structure_em trivial generator") {
  GeneratorSpec spec = generator_preset("empty");
  spec.num_states = {1, 1, 1, 1};
  const Dataset d = synthesize(make_generator(spec), 300, 5);
  LearnConfig cfg;
  cfg.num_states = {1, 1, 1, 1};
  cfg.seed = 1;
  const TrainResult r = structure_em(d, cfg);
  CHECK(r.model.network.edges().empty());
  int max_iter = 0;
  for (const auto& rec : r.trace.records) max_iter = std::max(max_iter, rec.structure_iter);
  CHECK(max_iter <= 2);
  CHECK(r.trace.convergence == "structure unchanged");
  CHECK(r.trace.param_em_monotone());
  CHECK_NOTHROW(r.model.validate());
  for (const auto& rec : r.trace.records)
    CHECK(std::abs(rec.score.expected_bic - (rec.score.expected_loglik - 0.5 * std::log(300.0) * rec.score.dim)) < 1e-9 * std::max(1.0, std::abs(rec.score.expected_bic)));
}

TEST_CASE("structure_em is deterministic and order independent on separated data") {
  GeneratorSpec spec = generator_preset("structured");
  spec.state_separation = 0.3;
  const Dataset d = synthesize(make_generator(spec), 400, 8);
  LearnConfig cfg;
  cfg.seed = 4;
  cfg.max_structure_iters = 3;
  const TrainResult a = structure_em(d, cfg);
  const TrainResult b = structure_em(d, cfg);
  CHECK(format_model(a.model) == format_model(b.model));
  CHECK(format_trace(a.trace, global_node_names()) == format_trace(b.trace, global_node_names()));

  // Reversed sample order: same edges, same parameters up to state relabeling and rounding.
  Dataset rev = d;
  std::reverse(rev.samples.begin(), rev.samples.end());
  const TrainResult c = structure_em(rev, cfg);
  CHECK(c.model.network.edges() == a.model.network.edges());
  for (Component comp : kComponents) {
    const auto& ca = a.model.component(comp);
    const auto& cc = c.model.component(comp);
    Matrix cost(ca.num_states(), cc.num_states());
    for (int i = 0; i < ca.num_states(); ++i)
      for (int j = 0; j < cc.num_states(); ++j) cost(i, j) = (ca.shape[i].mean - cc.shape[j].mean).norm();
    const auto perm = testing::best_matching(cost);
    for (int i = 0; i < ca.num_states(); ++i) CHECK(cost(i, perm[i]) < 1e-6);
  }
}

TEST_CASE("state count selection") {
  GeneratorSpec spec = generator_preset("empty");
  spec.state_separation = 0.3;
  const HierarchicalModel gen = make_generator(spec);
  const Dataset train = synthesize(gen, 600, 30);
  const Dataset val = synthesize(gen, 600, 31);
  LearnConfig cfg;
  cfg.seed = 2;
  for (auto& r : cfg.state_ranges) r = {1, 6};
  const auto k = select_state_counts(train, val, cfg);
  for (int x : k) CHECK(x == 3);

  for (auto& r : cfg.state_ranges) r = {2, 2};
  CHECK(select_state_counts(train, val, cfg) == std::array<int, kNumComponents>{2, 2, 2, 2});

  cfg.state_ranges = {};
  cfg.state_ranges[0] = {3, 2};
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("validating on the training set never selects fewer states") {
  GeneratorSpec spec = generator_preset("empty");
  const HierarchicalModel gen = make_generator(spec);
  LearnConfig cfg;
  for (auto& r : cfg.state_ranges) r = {1, 5};
  cfg.kmeans_restarts = 3;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CAPTURE(seed);
    const Dataset train = synthesize(gen, 300, 40 + seed);
    const Dataset val = synthesize(gen, 300, 80 + seed);
    cfg.seed = seed;
    const auto honest = select_state_counts(train, val, cfg);
    const auto self = select_state_counts(train, train, cfg);
    for (std::size_t c = 0; c < kNumComponents; ++c) CHECK(self[c] >= honest[c]);
  }
}
