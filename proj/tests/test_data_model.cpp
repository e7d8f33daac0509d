#include <cmath>

#include "doctest.h"
#include "milr/data_model.hpp"
#include "test_support.hpp"

using namespace milr;
using milr::testing::check_within_3se;

namespace {

double column_mean(const Matrix& m, std::size_t c) {
  double acc = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) acc += m(r, c);
  return acc / static_cast<double>(m.rows());
}

}  // namespace

TEST_CASE("joint spec rejects rho outside (0, 1)") {
  for (double rho : {0.0, 1.0, -0.1, 1.5, std::nan("")}) CHECK_THROWS_AS((JointGaussianSpec{1, rho}.validate()), ValidationError);
  CHECK_THROWS_AS((JointGaussianSpec{0, 0.5}.validate()), ValidationError);
  CHECK_NOTHROW((JointGaussianSpec{1, 0.9999}.validate()));
}

TEST_CASE("joint sample correlation matches rho") {
  Rng rng(1);
  const std::size_t n = 100000;
  const Dataset d = sample_joint_gaussian({1, 0.5}, n, rng);
  REQUIRE(d.size() == n);
  const double mx = column_mean(d.inputs, 0), my = column_mean(d.labels, 0);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = d.inputs(i, 0) - mx, b = d.labels(i, 0) - my;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  CHECK(std::abs(sxy / std::sqrt(sxx * syy) - 0.5) <= 3.0 / std::sqrt(double(n)));
}

TEST_CASE("joint inputs have unit variance per coordinate") {
  Rng rng(2);
  const std::size_t n = 100000;
  const Dataset d = sample_joint_gaussian({3, 0.7}, n, rng);
  for (std::size_t c = 0; c < 3; ++c) {
    const double m = column_mean(d.inputs, c);
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) ss += (d.inputs(i, c) - m) * (d.inputs(i, c) - m);
    CHECK(std::abs(ss / (n - 1) - 1.0) <= 3.0 * std::sqrt(2.0 / n));
  }
}

TEST_CASE("joint cross-covariance is rho times identity") {
  Rng rng(3);
  const std::size_t n = 100000;
  const double rho = 0.6;
  const Dataset d = sample_joint_gaussian({2, rho}, n, rng);
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 2; ++b) {
      Vector prod(n);
      for (std::size_t i = 0; i < n; ++i) prod[i] = d.labels(i, a) * d.inputs(i, b);
      check_within_3se(mean_with_std_error(prod), a == b ? rho : 0.0);
    }
  }
}

TEST_CASE("near-degenerate joint model") {
  Rng rng(4);
  const Dataset d = sample_joint_gaussian({2, 0.9999}, 100, rng);
  CHECK(d.size() == 100);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(d.inputs(i, k) - d.labels(i, k)) < 0.1);
}

TEST_CASE("sampling is reproducible per seed") {
  Rng a(9), b(9);
  const Dataset x = sample_joint_gaussian({2, 0.3}, 50, a);
  const Dataset y = sample_joint_gaussian({2, 0.3}, 50, b);
  CHECK(x.inputs.data() == y.inputs.data());
  CHECK(x.labels.data() == y.labels.data());
}

TEST_CASE("scalar linear model with vanishing noise") {
  Rng rng(5);
  const Dataset d = sample_scalar_regression({2, TruthKind::linear, {2.0, -1.0}, 1e-9}, 100, rng);
  for (std::size_t i = 0; i < d.size(); ++i)
    CHECK(std::abs(d.labels(i, 0) - (2 * d.inputs(i, 0) - d.inputs(i, 1))) <= 1e-7);
}

TEST_CASE("scalar linear residual variance is the noise variance") {
  Rng rng(6);
  const std::size_t n = 100000;
  const ScalarRegressionSpec spec{2, TruthKind::linear, {0.5, 1.5}, 1.0};
  const Dataset d = sample_scalar_regression(spec, n, rng);
  Vector r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = d.labels(i, 0) - spec.truth_value(d.input(i));
  const McEstimate m = mean_with_std_error(r);
  double ss = 0;
  for (double v : r) ss += (v - m.estimate) * (v - m.estimate);
  CHECK(std::abs(ss / (n - 1) - 1.0) <= 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("scalar truth catalog") {
  Rng rng(7);
  const Dataset d = sample_scalar_regression({1, TruthKind::sine, {}, 0.1}, 10, rng);
  CHECK(d.size() == 10);
  for (double v : d.labels.data()) CHECK(std::isfinite(v));
  const Vector x{1.0, 3.0};
  CHECK(ScalarRegressionSpec{2, TruthKind::quadratic, {}, 1.0}.truth_value(x) == doctest::Approx(5.0));
  CHECK(ScalarRegressionSpec{1, TruthKind::sine, {}, 1.0}.truth_value(Vector{0.25}) == doctest::Approx(1.0));
  CHECK(truth_kind_from_string(to_string(TruthKind::quadratic)) == TruthKind::quadratic);
  CHECK_THROWS_AS(truth_kind_from_string("cubic"), ValidationError);
  CHECK_THROWS_AS((ScalarRegressionSpec{2, TruthKind::linear, {1.0}, 1.0}.validate()), ValidationError);
  CHECK_THROWS_AS((ScalarRegressionSpec{1, TruthKind::linear, {1.0}, 0.0}.validate()), ValidationError);
}

TEST_CASE("bayes predictor and risk") {
  const Vector x{2.0, -4.0};
  CHECK(bayes_predict({2, 0.5}, x) == Vector{1.0, -2.0});
  CHECK(bayes_predict({2, 0.3}, Vector{0.0, 0.0}) == Vector{0.0, 0.0});
  CHECK(bayes_risk({3, 0.8}) == doctest::Approx(1.08).epsilon(1e-14));
  CHECK(bayes_risk({1, 1.0 - 1e-12}) < 1e-11);
  const double rho_star = std::sqrt(1.0 - 1.0 / (2.0 * kPi * std::exp(1.0)));
  CHECK(bayes_risk({5, rho_star}) == doctest::Approx(5.0 / (2.0 * kPi * std::exp(1.0))).epsilon(1e-12));
  CHECK(bayes_risk({5, rho_star}) == doctest::Approx(0.2927492).epsilon(1e-7));
}

TEST_CASE("population risk Monte Carlo") {
  Rng rng(8);
  check_within_3se(population_risk_mc([](std::span<const double>) { return Vector{0.0}; }, {1, 0.4}, 100000, rng),
                   1.0);
  const JointGaussianSpec two{2, 0.6};
  check_within_3se(
      population_risk_mc([&](std::span<const double> x) { return bayes_predict(two, x); }, two, 100000, rng), 1.28);
  check_within_3se(
      population_risk_mc([](std::span<const double> x) { return Vector(x.begin(), x.end()); }, {1, 0.5}, 100000, rng),
      1.0);
}

TEST_CASE("dataset validation") {
  Dataset d(2, 1);
  d.append(Vector{1, 2}, Vector{3});
  CHECK(d.size() == 1);
  CHECK_THROWS_AS(d.append(Vector{1}, Vector{3}), ValidationError);
  CHECK_THROWS_AS(mean_with_std_error(Vector{1.0}), ValidationError);
}
