#include "doctest.h"
#include "support.hpp"

#include "ted/dataset.hpp"
#include "ted/oracle.hpp"

#include <cmath>
#include <numeric>

using namespace ted;
using ted::test::TempDir;
using ted::test::write_text;

namespace {

CsvSchema small_schema() {
  CsvSchema s;
  s.label_column = "y";
  s.explanation_columns = {"e0", "e1"};
  return s;
}

Dataset tiny_dataset(std::vector<double> column, std::vector<Split> splits) {
  Dataset d;
  const auto n = static_cast<Eigen::Index>(column.size());
  d.features.resize(n, 1);
  Matrix y(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.features(i, 0) = column[static_cast<std::size_t>(i)];
    y(i, 0) = static_cast<double>(i);
  }
  d.labels = Target::continuous(y);
  d.explanations = Target::continuous(Matrix(n, 0));
  d.splits = std::move(splits);
  return d;
}

}  // namespace

TEST_CASE("load_csv reads shapes in file order") {
  TempDir dir("csv");
  write_text(dir / "d.csv", "x0,x1,y,e0,e1\n1,2,3,4,5\n6,7,8,9,10\n11,12,13,14,15e0\n");
  const Dataset d = load_csv(dir / "d.csv", small_schema());
  CHECK(d.features.rows() == 3);
  CHECK(d.features.cols() == 2);
  CHECK(d.labels.rows() == 3);
  CHECK(d.explanations.values.rows() == 3);
  CHECK(d.explanations.values.cols() == 2);
  CHECK(d.features(1, 0) == 6.0);
  CHECK(d.labels.values(2, 0) == 13.0);
  CHECK(d.explanations.values(2, 1) == 15.0);
  CHECK(d.feature_names == std::vector<std::string>{"x0", "x1"});
}

TEST_CASE("load_csv errors") {
  TempDir dir("csv_err");
  SUBCASE("header only") {
    write_text(dir / "d.csv", "x0,x1,y,e0,e1\n");
    CHECK_THROWS_WITH_AS(load_csv(dir / "d.csv", small_schema()), doctest::Contains("empty dataset"), FormatError);
  }
  SUBCASE("missing file") { CHECK_THROWS(load_csv(dir / "absent.csv", small_schema())); }
  SUBCASE("missing column") {
    write_text(dir / "d.csv", "x0,x1,y,e0\n1,2,3,4\n");
    CHECK_THROWS_WITH_AS(load_csv(dir / "d.csv", small_schema()), doctest::Contains("e1"), FormatError);
  }
  SUBCASE("ragged row") {
    write_text(dir / "d.csv", "x0,x1,y,e0,e1\n1,2,3,4,5\n1,2,3\n");
    CHECK_THROWS_WITH_AS(load_csv(dir / "d.csv", small_schema()), doctest::Contains("ragged"), FormatError);
  }
  SUBCASE("non-numeric cell") {
    write_text(dir / "d.csv", "x0,x1,y,e0,e1\n1,abc,3,4,5\n");
    CHECK_THROWS_WITH_AS(load_csv(dir / "d.csv", small_schema()), doctest::Contains("abc"), FormatError);
  }
}

TEST_CASE("load_csv handles a 4869-feature file") {
  TempDir dir("wide");
  std::string text;
  for (int c = 0; c < 4869; ++c) text += "f" + std::to_string(c) + ",";
  text += "y\n";
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4869; ++c) text += std::to_string((r + c) % 7) + ",";
    text += std::to_string(r) + "\n";
  }
  write_text(dir / "wide.csv", text);
  CsvSchema s;
  s.label_column = "y";
  const Dataset d = load_csv(dir / "wide.csv", s);
  CHECK(d.n_features() == 4869);
  CHECK_FALSE(d.has_explanations());
}

TEST_CASE("categorical targets from csv") {
  TempDir dir("cat");
  write_text(dir / "d.csv", "x,y,e\n0.5,1,2\n0.1,0,0\n");
  CsvSchema s;
  s.label_column = "y";
  s.explanation_columns = {"e"};
  s.label_kind = ValueKind::categorical;
  s.explanation_kind = ValueKind::categorical;
  const Dataset d = load_csv(dir / "d.csv", s);
  CHECK(d.labels.classes == std::vector<int>{1, 0});
  CHECK(d.explanations.classes == std::vector<int>{2, 0});
  CHECK(d.explanations.n_classes == 3);
}

TEST_CASE("schema round trip") {
  TempDir dir("schema");
  CsvSchema s = small_schema();
  s.feature_columns = {"x1"};
  s.explanation_kind = ValueKind::categorical;
  write_schema(s, dir / "s.schema");
  const CsvSchema r = load_schema(dir / "s.schema");
  CHECK(r.label_column == "y");
  CHECK(r.explanation_columns == s.explanation_columns);
  CHECK(r.feature_columns == s.feature_columns);
  CHECK(r.explanation_kind == ValueKind::categorical);
}

TEST_CASE("log_transform") {
  Dataset d = tiny_dataset({0.0, 900.0, -99.9}, {Split::train, Split::train, Split::test});
  const Dataset t = log_transform(d);
  CHECK(t.features(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(t.features(1, 0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(t.features(2, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(t.labels.values == d.labels.values);
  CHECK_THROWS_AS(log_transform(tiny_dataset({-100.0}, {Split::train})), std::domain_error);
}

TEST_CASE("standardize uses training rows with the population convention") {
  Dataset d = tiny_dataset({1.0, 2.0, 3.0, 2.0}, {Split::train, Split::train, Split::train, Split::test});
  auto [s, stats] = standardize(d);
  CHECK(stats.mean(0) == doctest::Approx(2.0));
  CHECK(stats.stddev(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));
  const double mean = (s.features(0, 0) + s.features(1, 0) + s.features(2, 0)) / 3.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(s.features(3, 0) == 0.0);  // test row at the train mean

  SUBCASE("constant column maps to zeros") {
    auto [c, cs] = standardize(tiny_dataset({5.0, 5.0, 5.0}, {Split::train, Split::train, Split::test}));
    CHECK(cs.stddev(0) == 1.0);
    CHECK(c.features.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("given stats are applied as-is") {
    StandardizationStats given{Vector::Constant(1, 1.0), Vector::Constant(1, 2.0)};
    auto [g, gs] = standardize(d, given);
    CHECK(g.features(2, 0) == 1.0);
    CHECK(gs.stddev(0) == 2.0);
  }
  SUBCASE("no training rows") {
    CHECK_THROWS(standardize(tiny_dataset({1.0, 2.0}, {Split::test, Split::test})));
  }
}

TEST_CASE("standardize round trip") {
  std::mt19937_64 rng(11);
  SyntheticSpec spec;
  spec.n_samples = 60;
  spec.n_features = 8;
  spec.seed = 3;
  Dataset d = split_fixed(generate_synthetic(spec), {40, 10, 10});
  auto [s, stats] = standardize(d);
  const Dataset back = unstandardize(s, stats);
  CHECK((back.features - d.features).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("select_features") {
  std::mt19937_64 rng(5);
  Dataset d;
  const Eigen::Index n = 80;
  d.features = ted::test::random_matrix(n, 6, rng);
  Matrix y(n, 1);
  y.col(0) = d.features.col(0);
  d.labels = Target::continuous(y);
  d.explanations = Target::continuous(Matrix(n, 0));
  d.splits.assign(static_cast<std::size_t>(n), Split::train);

  SUBCASE("identity for k = n_features") {
    auto [out, idx] = select_features(d, 6);
    CHECK(idx == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    CHECK(out.features == d.features);
  }
  SUBCASE("feature equal to Y is chosen") {
    // direct correlation check
    const Vector x = d.features.col(0);
    const Vector t = y.col(0);
    const double mx = x.mean(), mt = t.mean();
    double sxy = 0, sxx = 0, syy = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      sxy += (x(i) - mx) * (t(i) - mt);
      sxx += (x(i) - mx) * (x(i) - mx);
      syy += (t(i) - mt) * (t(i) - mt);
    }
    CHECK(std::abs(sxy / std::sqrt(sxx * syy)) == doctest::Approx(1.0).epsilon(1e-12));
    auto [out, idx] = select_features(d, 1);
    CHECK(idx == std::vector<std::size_t>{0});
    CHECK(out.n_features() == 1);
  }
  SUBCASE("k out of range") {
    CHECK_THROWS(select_features(d, 0));
    CHECK_THROWS(select_features(d, 7));
  }
  SUBCASE("idempotent") {
    auto [once, idx] = select_features(d, 3);
    auto [twice, idx2] = select_features(once, 3);
    CHECK(idx2 == std::vector<std::size_t>{0, 1, 2});
    CHECK(twice.features == once.features);
  }
  SUBCASE("ranking ignores non-training rows") {
    Dataset e = d;
    // column 1 tracks Y on the test rows only; column 2 tracks it on the train rows
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool test_row = i >= 60;
      e.splits[static_cast<std::size_t>(i)] = test_row ? Split::test : Split::train;
      e.features(i, 0) = 0.0;
      e.features(i, 1) = test_row ? y(i, 0) : 0.01 * e.features(i, 1);
      e.features(i, 2) = test_row ? 0.0 : y(i, 0);
    }
    auto [out, idx] = select_features(e, 1);
    CHECK(idx == std::vector<std::size_t>{2});
  }
  SUBCASE("custom scorer") {
    auto [out, idx] = select_features(d, 2, [](const Matrix& f, const Vector&) {
      Vector s(f.cols());
      for (Eigen::Index c = 0; c < f.cols(); ++c) s(c) = static_cast<double>(c);
      return s;
    });
    CHECK(idx == std::vector<std::size_t>{4, 5});
  }
}

TEST_CASE("split_fixed") {
  SyntheticSpec spec;
  spec.n_samples = 476;
  spec.n_features = 5;
  const Dataset d = generate_synthetic(spec);
  const Dataset s = split_fixed(d, {338, 69, 69});
  CHECK(s.indices_of(Split::train).size() == 338);
  CHECK(s.indices_of(Split::validation).front() == 338);
  CHECK(s.indices_of(Split::test).front() == 407);
  CHECK(s.indices_of(Split::test).back() == 475);

  const Dataset all = split_fixed(d, {476, 0, 0});
  CHECK(all.indices_of(Split::train).size() == 476);

  SyntheticSpec two = spec;
  two.n_samples = 2;
  CHECK_THROWS(split_fixed(generate_synthetic(two), {1, 1, 1}));
}

TEST_CASE("split parts keep X, Y and E aligned") {
  SyntheticSpec spec;
  spec.n_samples = 30;
  spec.n_features = 4;
  spec.n_latent = 2;
  const Dataset d = split_fixed(generate_synthetic(spec), {20, 5, 5});
  const Dataset t = d.split_part(Split::test);
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(t.features.row(i) == d.features.row(25 + i));
    CHECK(t.labels.values(i, 0) == d.labels.values(25 + i, 0));
    CHECK(t.explanations.values.row(i) == d.explanations.values.row(25 + i));
  }
  CHECK(t.splits == std::vector<Split>(5, Split::test));
}

TEST_CASE("generate_synthetic") {
  SyntheticSpec spec;
  spec.n_samples = 120;
  spec.seed = 42;

  SUBCASE("deterministic") {
    const Dataset a = generate_synthetic(spec);
    const Dataset b = generate_synthetic(spec);
    CHECK(a.features == b.features);
    CHECK(a.labels.values == b.labels.values);
    CHECK(a.explanations.values == b.explanations.values);
    spec.seed = 43;
    CHECK_FALSE(generate_synthetic(spec).features == a.features);
  }
  SUBCASE("noise-free continuous rule: Y is a least-squares function of E") {
    const SyntheticData s = generate_synthetic_detailed(spec);
    const Matrix& e = s.data.explanations.values;
    const Vector y = s.data.labels.values.col(0);
    const Vector w = oracle::least_squares_closed_form(e, y);
    CHECK((e * w - y).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((e * s.label_weights - y).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("categorical rule with 3 clusters") {
    spec.explanation_kind = ValueKind::categorical;
    spec.n_clusters = 3;
    const Dataset d = generate_synthetic(spec);
    for (int e : d.explanations.classes) CHECK((e >= 0 && e <= 2));
    spec.label_kind = ValueKind::categorical;
    const Dataset c = generate_synthetic(spec);
    for (std::size_t i = 0; i < c.labels.classes.size(); ++i) {
      CHECK(c.labels.classes[i] == c.explanations.classes[i] % 3);
    }
  }
  SUBCASE("invalid spec") {
    spec.n_latent = spec.n_features + 1;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
    spec.n_latent = 2;
    spec.label_noise = -1.0;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
  }
}

TEST_CASE("synthetic spec file") {
  TempDir dir("spec");
  write_text(dir / "s.cfg", "[synthetic]\nn_samples = 12\nn_features = 4\nn_latent = 2\nseed = 9\n");
  const SyntheticSpec s = load_synthetic_spec(dir / "s.cfg");
  CHECK(s.n_samples == 12);
  CHECK(s.n_features == 4);
  CHECK(s.seed == 9);
}

TEST_CASE("csv write and read round trip") {
  TempDir dir("roundtrip");
  SyntheticSpec spec;
  spec.n_samples = 10;
  spec.n_features = 3;
  spec.n_latent = 2;
  const Dataset d = generate_synthetic(spec);
  write_csv(d, dir / "d.csv");
  CsvSchema s;
  s.label_column = "y";
  s.explanation_columns = d.explanation_names;
  const Dataset r = load_csv(dir / "d.csv", s);
  CHECK(r.features == d.features);
  CHECK(r.labels.values == d.labels.values);
  CHECK(r.explanations.values == d.explanations.values);
}
