#include <doctest.h>

#include <cmath>

#include "altpp/errors.hpp"
#include "altpp/metrics.hpp"
#include "altpp/rng.hpp"

using namespace altpp;

namespace {

Tensor randn(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal(rng, std::move(shape));
}

// Naive oracle: k(x,x) + k(y,y) - 2 k(x,y) averaged over all index pairs.
double brute_force_mmd(const Tensor& x, const Tensor& y, double h) {
  const std::size_t n = x.dim(0), m = y.dim(0), d = x.dim(1);
  auto k = [&](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += (a.at(i, c) - b.at(j, c)) * (a.at(i, c) - b.at(j, c));
    return std::exp(-s / (2.0 * h * h));
  };
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) xx += k(x, i, x, j);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) yy += k(y, i, y, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) xy += k(x, i, y, j);
  return xx / (n * n) + yy / (m * m) - 2.0 * xy / (n * m);
}

}  // namespace

TEST_CASE("median bandwidth") {
  CHECK(median_bandwidth(Tensor(Shape{3, 1}, std::vector<double>{0, 1, 3})) == 2.0);
  CHECK(median_bandwidth(Tensor(Shape{4, 2}, 1.5)) == 1.0);
  CHECK(median_bandwidth(Tensor::matrix({{0, 0}, {3, 4}})) == 5.0);
  CHECK_THROWS_AS(median_bandwidth(Tensor::matrix({{1, 2}})), DimensionError);
}

TEST_CASE("MMD closed form and identities") {
  const Tensor x = Tensor::matrix({{0.0}});
  const Tensor y = Tensor::matrix({{1.0}});
  CHECK(mmd_rbf(x, y, 1.0) == doctest::Approx(2.0 - 2.0 * std::exp(-0.5)).epsilon(1e-15));
  CHECK(mmd_rbf(x, y, 1.0) == doctest::Approx(0.786939).epsilon(1e-6));
  const Tensor a = randn({20, 3}, 1);
  CHECK(std::abs(mmd_rbf(a, a)) <= 1e-12);
  CHECK_THROWS_AS(mmd_rbf(a, randn({5, 4}, 2)), DimensionError);
}

// Property: the library matches the naive oracle for random sets and bandwidths.
TEST_CASE("MMD matches the double-loop oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor x = randn({20, 3}, derive_seed(seed, 1));
    Tensor y = randn({20, 3}, derive_seed(seed, 2));
    for (double& v : y.values()) v += 0.5;
    for (double h : {0.3, 1.0, median_bandwidth(x, y)}) CHECK(std::abs(mmd_rbf(x, y, h) - brute_force_mmd(x, y, h)) <= 1e-12);
    CHECK(std::abs(mmd_rbf(x, y) - brute_force_mmd(x, y, median_bandwidth(x, y))) <= 1e-12);
  }
}

TEST_CASE("MMD on sequence sets flattens rows") {
  const Tensor x = randn({6, 4, 2}, 3), y = randn({5, 4, 2}, 4);
  CHECK(mmd_rbf(x, y, 1.3) == doctest::Approx(mmd_rbf(x.reshaped({6, 8}), y.reshaped({5, 8}), 1.3)).epsilon(1e-15));
  CHECK(std::abs(mmd_rbf_marginal(x, x)) <= 1e-12);
  CHECK(mmd_rbf_marginal(x, y) >= 0.0);
}

TEST_CASE("CRPS against exact piecewise integrals") {
  // Values of the integral of (F_ens(u) - 1{u >= y})^2 du, evaluated offline
  // by adaptive quadrature over the breakpoints.
  struct Case {
    std::vector<double> members;
    double y;
    double expected;
  };
  const Case cases[] = {
      {{0.7}, -0.2, 0.9},
      {{0.0, 2.0}, 1.0, 0.5},
      {{-1.0, 0.5, 2.0}, 0.3, 0.4},
      {{1.5, -0.25, 0.75}, 2.5, 13.0 / 9.0},
      {{0.2, 0.2}, 0.2, 0.0},
  };
  for (const auto& c : cases) CHECK(std::abs(crps_ensemble(c.members, c.y) - c.expected) <= 1e-10);
  CHECK(crps_ensemble(std::vector<double>{1.25, 1.25, 1.25}, -0.5) == 1.75);
  CHECK(crps_ensemble(std::vector<double>{3.0}, 3.0) == 0.0);
  CHECK_THROWS_AS(crps_ensemble(std::vector<double>{}, 0.0), DimensionError);
}

TEST_CASE("CRPS over coordinates") {
  const Tensor members = Tensor::matrix({{0.0, 1.0}, {2.0, 1.0}});
  CHECK(crps_ensemble(members, Tensor::vector({1.0, 0.0})) == doctest::Approx((0.5 + 1.0) / 2.0));
}

TEST_CASE("pointwise metrics") {
  const std::vector<double> y = {1, 2, 3};
  const auto same = pointwise_metrics(y, y);
  CHECK(same.mae == 0.0);
  CHECK(same.mse == 0.0);
  CHECK(*same.cc == doctest::Approx(1.0));
  const auto shifted = pointwise_metrics(y, std::vector<double>{2, 3, 4});
  CHECK(shifted.mae == 1.0);
  CHECK(shifted.mse == 1.0);
  CHECK(*shifted.cc == doctest::Approx(1.0));
  const auto flat = pointwise_metrics(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3});
  CHECK_FALSE(flat.cc.has_value());
  CHECK(flat.mse == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(pointwise_metrics(y, std::vector<double>{1, 2}), DimensionError);
}
