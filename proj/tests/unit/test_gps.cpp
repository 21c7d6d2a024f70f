#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "spatialdr/error.hpp"
#include "spatialdr/gps.hpp"

using namespace spatialdr;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014327;

// n units; treatment = X gamma + noise; confounders x1..xq.
Dataset simulated(Rng& rng, Index n, Index q, double gamma, double noise) {
  std::vector<NamedColumn> conf;
  VectorXd a = testutil::normals(rng, n, noise);
  for (Index j = 0; j < q; ++j) {
    VectorXd x = testutil::normals(rng, n);
    a += gamma * x;
    conf.emplace_back("x" + std::to_string(j + 1), x);
  }
  return Dataset(testutil::ids(std::size_t(n)), testutil::normals(rng, n), {{"A", a}}, conf);
}
}  // namespace

TEST_CASE("normal density values") {
  CHECK(gps_density(0.3, 0.3, 1.0) == doctest::Approx(kInvSqrt2Pi).epsilon(1e-14));
  CHECK(gps_density(1.3, 0.3, 1.0) == doctest::Approx(kInvSqrt2Pi * std::exp(-0.5)).epsilon(1e-14));
  CHECK(gps_density(2.0, 2.0, 4.0) == doctest::Approx(kInvSqrt2Pi / 2.0).epsilon(1e-14));
  GpsModel m;
  m.sigma2 = 4.0;
  CHECK(gps_density(m, 5.0, 3.0) == doctest::Approx(kInvSqrt2Pi / 2.0 * std::exp(-0.5)).epsilon(1e-14));
}

TEST_CASE("independent treatment: sparse basis and sigma2 close to marginal variance") {
  Rng rng(1);
  const Dataset d = simulated(rng, 500, 2, 0.0, 1.0);
  MatrixXd Z(500, 20);
  for (Index j = 0; j < 20; ++j) Z.col(j) = testutil::normals(rng, 500);
  const GpsModel m = fit_gps(d, "A", Z, CvConfig{});
  CHECK(m.mean_fit.active_count <= 3);
  CHECK(std::abs(m.sigma2 / m.marginal_var - 1.0) < 0.1);
  CHECK(m.marginal_var > 0.0);
}

TEST_CASE("deterministic treatment gives zero residual variance") {
  Rng rng(2);
  const VectorXd x = testutil::normals(rng, 50);
  const Dataset d(testutil::ids(50), testutil::normals(rng, 50), {{"A", 3.0 * x}}, {{"x", x}});
  const GpsModel m = fit_gps(d, "A", MatrixXd(50, 0), CvConfig{});
  CHECK(m.sigma2 < 1e-12);
}

TEST_CASE("small toy matches OLS") {
  Rng rng(3);
  const Dataset d = simulated(rng, 10, 2, 0.7, 0.5);
  const GpsModel m = fit_gps(d, "A", MatrixXd(10, 0), CvConfig{});
  MatrixXd D(10, 3);
  D.col(0).setOnes();
  D.rightCols(2) = d.confounder_matrix();
  const VectorXd ols = (D.transpose() * D).ldlt().solve(D.transpose() * d.treatment("A"));
  CHECK((m.mean_fit.coefficients - ols).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((m.fitted_mean - D * ols).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("constant treatment is degenerate") {
  Rng rng(4);
  const Dataset d(testutil::ids(20), testutil::normals(rng, 20), {{"A", VectorXd::Constant(20, 2.0)}},
                  {{"x", testutil::normals(rng, 20)}});
  CHECK_THROWS_AS(fit_gps(d, "A", MatrixXd(20, 0), CvConfig{}), NumericalError);
}

TEST_CASE("weights are one when conditional and marginal densities coincide") {
  Rng rng(5);
  GpsModel m;
  const VectorXd a = testutil::normals(rng, 30);
  m.marginal_mean = 0.4;
  m.marginal_var = 2.5;
  m.fitted_mean = VectorXd::Constant(30, 0.4);
  m.sigma2 = 2.5;
  const WeightVector w = stabilized_weights(m, a);
  CHECK((w.w.array() == 1.0).all());
  CHECK_FALSE(w.truncation_bounds.has_value());
}

TEST_CASE("tail unit near the marginal mode gets weight above one") {
  GpsModel m;
  m.marginal_mean = 0.0;
  m.marginal_var = 1.0;
  m.sigma2 = 0.25;
  m.fitted_mean = VectorXd::Constant(3, 0.0);
  m.fitted_mean(0) = 1.5;
  const WeightVector w = stabilized_weights(m, VectorXd::Zero(3));
  CHECK(w.w(0) > 1.0);
  CHECK(w.w(0) > w.w(1));
}

TEST_CASE("underflow without truncation is an error, truncation clamps") {
  GpsModel m;
  m.marginal_mean = 0.0;
  m.marginal_var = 1.0;
  m.sigma2 = 1e-4;
  m.fitted_mean = VectorXd::LinSpaced(100, -1, 1);
  VectorXd a = m.fitted_mean;
  a(0) = 5.0;  // 600 conditional sds away
  CHECK_THROWS_AS(stabilized_weights(m, a), NumericalError);
  const WeightVector w = stabilized_weights(m, a, Truncation{1, 99});
  REQUIRE(w.truncation_bounds.has_value());
  CHECK(w.min() == w.truncation_bounds->first);
  CHECK(w.max() == w.truncation_bounds->second);
  CHECK(w.w.allFinite());
  CHECK((w.w.array() > 0).all());
  CHECK_THROWS_AS(stabilized_weights(m, a, Truncation{50, 10}), ConfigError);
}

TEST_CASE("kde marginal integrates to one") {
  Rng rng(6);
  const Dataset d = simulated(rng, 200, 1, 0.5, 1.0);
  const GpsModel m = fit_gps(d, "A", MatrixXd(200, 0), CvConfig{}, MarginalDensity::Kde);
  CHECK(m.kde_bandwidth > 0.0);
  double integral = 0.0;
  const double step = 0.01;
  for (double x = -12; x < 12; x += step) integral += m.marginal_density(x) * step;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(parse_marginal_density("KDE") == MarginalDensity::Kde);
  CHECK_THROWS_AS(parse_marginal_density("empirical"), ConfigError);
}

TEST_CASE("type-7 quantile") {
  const VectorXd v{{4.0, 1.0, 3.0, 2.0}};
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 4.0);
  CHECK(quantile(v, 0.5) == 2.5);
  CHECK(quantile(v, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("correlations") {
  const VectorXd x{{1.0, 2.0, 3.0, 4.0}};
  const VectorXd y{{2.0, 1.0, 4.0, 3.0}};
  CHECK(pearson_correlation(x, y) == doctest::Approx(0.6));
  CHECK(weighted_correlation(x, y, VectorXd::Ones(4)) == doctest::Approx(0.6).epsilon(1e-14));
  // w = (1, 1, 1, 3): weighted means 3 and 8/3; sxy = 4/6, sxx = 8/6, syy = (16/3)/6.
  const VectorXd w{{1.0, 1.0, 1.0, 3.0}};
  CHECK(weighted_correlation(x, y, w) == doctest::Approx(4.0 / std::sqrt(8.0 * 16.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("balance table") {
  Rng rng(7);
  const Dataset d = simulated(rng, 400, 2, 0.0, 1.0);
  const WeightVector ones{VectorXd::Ones(400), std::nullopt};
  const auto rows = balance_table(d, "A", ones);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.rho_weighted == doctest::Approx(r.rho_unweighted).epsilon(1e-14));
    CHECK(std::abs(r.rho_unweighted) < 3.0 / std::sqrt(400.0));
  }
  const auto with_basis = balance_table(d, "A", ones, MatrixXd::Random(400, 3));
  CHECK(with_basis.back().covariate == "basis_mean_abs");
  CHECK(balance_csv(rows).rfind("confounder,rho_unweighted,rho_weighted\nx1,", 0) == 0);
}

TEST_CASE("correctly specified GPS improves balance and keeps mean weight near one") {
  std::vector<double> raw, weighted, means;
  for (int rep = 0; rep < 50; ++rep) {
    Rng rng(100 + std::uint64_t(rep));
    const Dataset d = simulated(rng, 500, 3, 0.3, 1.0);
    const GpsModel m = fit_gps(d, "A", MatrixXd(500, 0), CvConfig{});
    const WeightVector w = stabilized_weights(m, d, "A");
    CHECK(w.w.allFinite());
    CHECK((w.w.array() > 0).all());
    means.push_back(w.mean());
    for (const auto& r : balance_table(d, "A", w)) {
      raw.push_back(std::abs(r.rho_unweighted));
      weighted.push_back(std::abs(r.rho_weighted));
    }
  }
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + long(v.size() / 2), v.end());
    return v[v.size() / 2];
  };
  CHECK(median(weighted) < median(raw));
  for (double m : means) CHECK(std::abs(m - 1.0) < 0.25);
}
