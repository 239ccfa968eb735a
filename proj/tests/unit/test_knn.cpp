#include "doctest.h"
#include "support.hpp"

#include "ted/knn.hpp"
#include "ted/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace ted;

namespace {

Target column(std::vector<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return Target::continuous(std::move(m));
}

Neighborhood hood(std::vector<std::size_t> idx, std::vector<double> w) {
  Neighborhood n;
  n.indices = std::move(idx);
  n.weights = std::move(w);
  n.distances.assign(n.indices.size(), 0.0);
  return n;
}

}  // namespace

TEST_CASE("index construction") {
  std::mt19937_64 rng(1);
  const Matrix emb = test::random_matrix(338, 64, rng);
  const NeighborIndex idx = build_index(emb, column(std::vector<double>(338, 1.0)), {}, DistanceMetric::cosine);
  CHECK(idx.size() == 338);
  CHECK(idx.dimension() == 64);

  const NeighborIndex one = build_index(Matrix::Ones(1, 3), column({4.0}), {}, DistanceMetric::euclidean);
  const Neighborhood n = one.query(std::vector<double>{0.0, 0.0, 0.0}, 5);
  CHECK(n.indices == std::vector<std::size_t>{0});
  CHECK(n.weights == std::vector<double>{1.0});

  CHECK_THROWS(build_index(Matrix(0, 3), column({}), {}, DistanceMetric::euclidean));
  CHECK_THROWS(build_index(Matrix::Ones(3, 2), column({1.0, 2.0}), {}, DistanceMetric::euclidean));
  CHECK_THROWS(build_index(Matrix::Ones(2, 2), column({1.0, 2.0}), {}, DistanceMetric::euclidean, {0.0}));
}

TEST_CASE("query examples") {
  Matrix pts(4, 2);
  pts << 0, 0, 1, 0, 3, 0, 7, 0;
  const NeighborIndex idx = build_index(pts, column({0, 1, 2, 3}), {}, DistanceMetric::euclidean);
  const Neighborhood n = idx.query(std::vector<double>{2.1, 0.0}, 2);
  CHECK(n.indices == std::vector<std::size_t>{2, 1});
  CHECK(n.distances[0] == doctest::Approx(0.9));
  CHECK(n.distances[1] == doctest::Approx(1.1));
  CHECK(idx.query(std::vector<double>{0.0, 0.0}, 10).indices.size() == 4);
  CHECK_THROWS(idx.query(std::vector<double>{0.0}, 1));
  CHECK_THROWS(idx.query(std::vector<double>{0.0, 0.0}, 0));

  // Ties break toward the lower row.
  Matrix tie(3, 1);
  tie << 1, -1, 1;
  const NeighborIndex t = build_index(tie, column({0, 1, 2}), {}, DistanceMetric::euclidean);
  CHECK(t.query(std::vector<double>{0.0}, 3).indices == std::vector<std::size_t>{0, 1, 2});

  CHECK(embedding_distance(std::vector<double>{0, 0}, std::vector<double>{1, 1}, DistanceMetric::cosine) == 1.0);
  CHECK(parse_distance_metric("cosine") == DistanceMetric::cosine);
  CHECK_THROWS(parse_distance_metric("manhattan"));
}

TEST_CASE("query agrees with the exhaustive oracle") {
  std::mt19937_64 rng(200);
  std::uniform_int_distribution<int> size(1, 60);
  std::uniform_int_distribution<int> dim(1, 8);
  for (int c = 0; c < 200; ++c) {
    const auto n = size(rng);
    const auto d = dim(rng);
    Matrix pts = test::random_matrix(n, d, rng);
    if (c % 4 == 0) {
      // Quantized coordinates force exact distance ties.
      for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = std::round(pts.data()[i]);
    }
    const Matrix q = test::random_matrix(1, d, rng);
    const auto metric = c % 2 ? DistanceMetric::cosine : DistanceMetric::euclidean;
    const std::size_t k = 1 + static_cast<std::size_t>(c) % static_cast<std::size_t>(n);
    const NeighborIndex idx = build_index(pts, column(std::vector<double>(static_cast<std::size_t>(n), 0.0)), {},
                                          metric);
    const Neighborhood got = idx.query(row_span(q, 0), k);
    const auto want = oracle::knn_exhaustive(pts, row_span(q, 0), k, metric);
    CAPTURE(c);
    CHECK(got.indices == want.indices);
    for (std::size_t i = 0; i < k; ++i) CHECK(got.distances[i] == doctest::Approx(want.distances[i]).epsilon(1e-12));

    const double sum = std::accumulate(got.weights.begin(), got.weights.end(), 0.0);
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(got.weights[i] >= 0.0);
      if (i > 0) CHECK(got.weights[i] <= got.weights[i - 1]);
      if (i > 0 && got.distances[i] == got.distances[i - 1]) CHECK(got.weights[i] == got.weights[i - 1]);
    }
  }
}

TEST_CASE("gaussian weights") {
  const auto w = gaussian_weights(std::vector<double>{1.0, 2.0}, 1.0);
  CHECK(w[0] == doctest::Approx(0.8176).epsilon(1e-4));
  CHECK(w[1] == doctest::Approx(0.1824).epsilon(1e-3));
  const auto o = oracle::gaussian_weights_direct(std::vector<double>{1.0, 2.0}, 1.0);
  CHECK(std::abs(w[0] - o[0]) <= 1e-12);

  const auto u = gaussian_weights(std::vector<double>{0.5, 0.5, 0.5}, 2.0);
  for (double x : u) CHECK(x == doctest::Approx(1.0 / 3.0));

  const auto f = gaussian_weights(std::vector<double>{1e6, 2e6}, 1e-3);
  CHECK(f == std::vector<double>{0.5, 0.5});

  CHECK_THROWS(gaussian_weights(std::vector<double>{1.0}, 0.0));
  CHECK_THROWS(gaussian_weights(std::vector<double>{1.0}, -1.0));
  CHECK_THROWS(gaussian_weights(std::vector<double>{-1.0}, 1.0));
}

TEST_CASE("median bandwidth") {
  Matrix pts(3, 1);
  pts << 1, 2, 4;
  const NeighborIndex idx = build_index(pts, column({0, 0, 0}), {}, DistanceMetric::euclidean);
  // Distances 1, 2, 4 from the origin; median 2.
  const Neighborhood n = idx.query(std::vector<double>{0.0}, 3);
  const auto expect = oracle::gaussian_weights_direct(std::vector<double>{1, 2, 4}, 2.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(n.weights[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  // Even count averages the middle pair.
  const auto n2 = idx.query(std::vector<double>{0.0}, 2);
  const auto e2 = oracle::gaussian_weights_direct(std::vector<double>{1, 2}, 1.5);
  CHECK(n2.weights[0] == doctest::Approx(e2[0]).epsilon(1e-12));
  // Identical points fall back to the floor without NaNs.
  const NeighborIndex same = build_index(Matrix::Zero(3, 1), column({0, 0, 0}), {}, DistanceMetric::euclidean);
  for (double w : same.query(std::vector<double>{0.0}, 3).weights) CHECK(w == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("continuous prediction") {
  Matrix values(3, 1);
  values << 10, 20, 30;
  CHECK(predict_continuous(hood({0, 1}, {0.8176, 0.1824}), values)(0) == doctest::Approx(11.824));
  Matrix two(2, 1);
  two << 0, 100;
  CHECK(predict_continuous(hood({0, 1}, {0.5, 0.5}), two)(0) == 50.0);
  CHECK(predict_continuous(hood({1, 0}, {0.3, 0.7}), values)(0) ==
        doctest::Approx(predict_continuous(hood({0, 1}, {0.7, 0.3}), values)(0)).epsilon(1e-15));
  CHECK_THROWS(predict_continuous(hood({5}, {1.0}), values));

  Matrix multi(2, 3);
  multi << 1, 2, 3, 3, 2, 1;
  const Vector v = predict_continuous(hood({0, 1}, {0.25, 0.75}), multi);
  CHECK(v(0) == doctest::Approx(2.5));
  CHECK(v(1) == doctest::Approx(2.0));
  CHECK(v(2) == doctest::Approx(1.5));
}

TEST_CASE("categorical prediction") {
  const std::vector<int> cls{0, 1, 1, 2};
  CHECK(predict_categorical(hood({0, 1, 2}, {0.6, 0.2, 0.2}), cls, 3) == 0);
  CHECK(predict_categorical(hood({0, 1, 2}, {0.6, 0.2, 0.2}), cls, 3, Voting::majority) == 1);
  CHECK(predict_categorical(hood({0, 3}, {0.5, 0.5}), cls, 3) == 0);
  CHECK(predict_categorical(hood({3, 1}, {0.5, 0.5}), cls, 3) == 1);
  CHECK_THROWS(predict_categorical(hood({0}, {1.0}), cls, 0));
  CHECK_THROWS(predict_categorical(hood({3}, {1.0}), cls, 2));
}

TEST_CASE("batch prediction carries both targets") {
  Matrix pts(3, 1);
  pts << 0, 1, 10;
  Matrix e(3, 2);
  e << 1, 1, 3, 3, 9, 9;
  const NeighborIndex idx =
      build_index(pts, Target::categorical({0, 1, 1}, 2), Target::continuous(e), DistanceMetric::euclidean, {1.0});
  Matrix q(2, 1);
  q << 0.1, 9.0;
  const KnnPrediction p = predict_batch(idx, q, 1);
  CHECK(p.labels.classes == std::vector<int>{0, 1});
  CHECK(p.explanations.values(0, 0) == 1.0);
  CHECK(p.explanations.values(1, 1) == 9.0);
}

TEST_CASE("index save and load") {
  test::TempDir dir("knn");
  std::mt19937_64 rng(5);
  const NeighborIndex a = build_index(test::random_matrix(20, 4, rng), column(std::vector<double>(20, 0.25)),
                                      Target::categorical(std::vector<int>(20, 1), 3), DistanceMetric::cosine);
  a.save(dir / "index.txt");
  const NeighborIndex b = NeighborIndex::load(dir / "index.txt");
  CHECK(b.embeddings() == a.embeddings());
  CHECK(b.labels().values == a.labels().values);
  CHECK(b.explanations().classes == a.explanations().classes);
  CHECK(b.metric() == a.metric());
  CHECK_FALSE(b.bandwidth().fixed);
  const Matrix q = test::random_matrix(1, 4, rng);
  CHECK(b.query(row_span(q, 0), 5).weights == a.query(row_span(q, 0), 5).weights);

  test::write_text(dir / "bad.txt", "not an index\n");
  CHECK_THROWS_AS(NeighborIndex::load(dir / "bad.txt"), FormatError);
  CHECK_THROWS(NeighborIndex::load(dir / "missing.txt"));
}
