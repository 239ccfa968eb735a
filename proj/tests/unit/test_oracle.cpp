#include "doctest.h"
#include "support.hpp"

#include "ted/oracle.hpp"

#include <cmath>
#include <limits>
#include <numeric>

using namespace ted;

TEST_CASE("exhaustive knn") {
  Matrix pts(3, 1);
  pts << 0, 1, 2;
  const auto r = oracle::knn_exhaustive(pts, std::vector<double>{0.0}, 2, DistanceMetric::euclidean);
  CHECK(r.indices == std::vector<std::size_t>{0, 1});
  CHECK(r.distances == std::vector<double>{0.0, 1.0});

  std::mt19937_64 rng(2);
  const Matrix p = test::random_matrix(12, 3, rng);
  const auto all = oracle::knn_exhaustive(p, row_span(p, 4), 12, DistanceMetric::euclidean);
  std::vector<std::size_t> sorted = all.indices;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> identity(12);
  std::iota(identity.begin(), identity.end(), 0);
  CHECK(sorted == identity);
  CHECK(all.indices[0] == 4);

  CHECK_THROWS(oracle::knn_exhaustive(pts, std::vector<double>{0.0}, 4, DistanceMetric::euclidean));
  CHECK_THROWS(oracle::knn_exhaustive(pts, std::vector<double>{0.0, 1.0}, 1, DistanceMetric::cosine));
}

TEST_CASE("finite differences") {
  const std::vector<double> p{1.0, -2.0, 0.5};
  const auto g = oracle::finite_difference_grad(
      [](std::span<const double> x) { return x[0] * x[0] + 3.0 * x[1] * x[2]; }, p, 1e-5);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(1.5).epsilon(1e-8));
  CHECK(g[2] == doctest::Approx(-6.0).epsilon(1e-8));

  for (double v : oracle::finite_difference_grad([](std::span<const double>) { return 4.0; }, p, 1e-5)) {
    CHECK(v == 0.0);
  }
  CHECK_THROWS(oracle::finite_difference_grad(
      [](std::span<const double>) { return std::numeric_limits<double>::quiet_NaN(); }, p, 1e-5));

  CHECK(oracle::max_relative_error(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 1e-9}, 1e-6) ==
        doctest::Approx(1e-3));
}

TEST_CASE("least squares") {
  const Vector y = Vector::LinSpaced(3, 1.0, 3.0);
  CHECK(oracle::least_squares_closed_form(Matrix::Identity(3, 3), y).isApprox(y));

  Matrix x(4, 2);
  x << 1, 0, 1, 1, 1, 2, 1, 3;
  const Vector t = x * Eigen::Vector2d(0.5, -2.0);
  CHECK(oracle::least_squares_closed_form(x, t).isApprox(Eigen::Vector2d(0.5, -2.0), 1e-10));

  Matrix s(3, 2);
  s << 1, 1, 2, 2, 3, 3;
  const Vector w = oracle::least_squares_closed_form(s, Vector::LinSpaced(3, 2.0, 6.0));
  CHECK(w.allFinite());
  CHECK((s * w - Vector::LinSpaced(3, 2.0, 6.0)).norm() < 1e-6);
}

TEST_CASE("direct helpers") {
  CHECK(oracle::cosine_direct(std::vector<double>{1, 0}, std::vector<double>{1, 1}) ==
        doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(oracle::cosine_direct(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 0.0);
  const auto w = oracle::gaussian_weights_direct(std::vector<double>{1.0, 2.0}, 1.0);
  CHECK(w[0] == doctest::Approx(0.8176).epsilon(1e-4));
}

TEST_CASE("tolerance validation") {
  CHECK_NOTHROW(oracle::OracleTolerance{}.validate());
  oracle::OracleTolerance bad;
  bad.fd_step = 0.0;
  CHECK_THROWS(bad.validate());
  bad = {};
  bad.gradient_rel = -1.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("gradcheck suite covers every loss") {
  const auto cases = oracle::run_gradcheck_suite(3, 5);
  CHECK(cases.size() == 18);
  for (const auto& c : cases) {
    CAPTURE(c.loss);
    CHECK(c.passed);
    CHECK(c.parameters > 0);
  }
}
