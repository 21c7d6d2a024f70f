#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "spatialdr/error.hpp"
#include "spatialdr/penalized_regression.hpp"

using namespace spatialdr;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Problem {
  MatrixXd X;
  VectorXd y;
  DesignSpec spec;
};

// Intercept plus `unpen - 1` raw columns unpenalized, then `pen` penalized columns.
Problem make_problem(Rng& rng, Index n, Index unpen, Index pen, double noise = 1.0) {
  Problem p;
  p.X.resize(n, unpen + pen);
  p.X.col(0).setOnes();
  for (Index j = 1; j < p.X.cols(); ++j) p.X.col(j) = testutil::normals(rng, n, 0.5 + double(j % 4));
  VectorXd beta = VectorXd::Zero(p.X.cols());
  for (Index j = 0; j < p.X.cols(); ++j) {
    if (j < unpen || j % 3 == 0) beta(j) = rng.normal();
  }
  p.y = p.X * beta + testutil::normals(rng, n, noise);
  for (Index j = 0; j < p.X.cols(); ++j) (j < unpen ? p.spec.unpenalized_cols : p.spec.penalized_cols).push_back(j);
  return p;
}

double scale_of(const VectorXd& y) { return std::max(1.0, y.cwiseAbs().maxCoeff()); }

double objective(const Problem& p, const VectorXd& b, double lambda) {
  double pen = 0.0;
  for (auto k : p.spec.penalized_cols) {
    const auto c = p.X.col(Index(k));
    const double s = p.spec.standardize_penalized ? std::sqrt((c.array() - c.mean()).square().mean()) : 1.0;
    pen += s * std::abs(b(Index(k)));
  }
  return (p.y - p.X * b).squaredNorm() / (2.0 * double(p.X.rows())) + lambda * pen;
}

}  // namespace

TEST_CASE("lambda = 0 matches the normal equations") {
  Rng rng(1);
  for (int t = 0; t < 5; ++t) {
    const Problem p = make_problem(rng, 80, 3, 12);
    const PenalizedFit fit = fit_lasso(p.X, p.y, p.spec, 0.0);
    const VectorXd oracle = (p.X.transpose() * p.X).ldlt().solve(p.X.transpose() * p.y);
    CHECK((fit.coefficients - oracle).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(fit.active_count == 12);
  }
}

TEST_CASE("single standardized predictor is soft-thresholded") {
  Rng rng(2);
  VectorXd x = testutil::normals(rng, 100);
  x.array() -= x.mean();
  x /= std::sqrt(x.squaredNorm() / 100.0);
  const VectorXd y = 0.8 * x + testutil::normals(rng, 100, 0.3);
  const double b = x.dot(y) / 100.0;
  MatrixXd X = x;
  DesignSpec spec{{}, {0}, true};
  for (double lambda : {0.1, 0.5, 0.79, 2.0}) {
    const PenalizedFit fit = fit_lasso(X, y, spec, lambda);
    const double expected = (b > 0 ? 1 : -1) * std::max(std::abs(b) - lambda, 0.0);
    CHECK(std::abs(fit.coefficients(0) - expected) < 1e-9);
  }
}

TEST_CASE("lambda_max zeroes every penalized coefficient") {
  Rng rng(3);
  const Problem p = make_problem(rng, 20, 2, 8);
  const double lmax = lambda_max(p.X, p.y, p.spec);
  const PenalizedFit at = fit_lasso(p.X, p.y, p.spec, lmax);
  CHECK(at.active_count == 0);
  const PenalizedFit below = fit_lasso(p.X, p.y, p.spec, 0.95 * lmax);
  CHECK(below.active_count >= 1);
  // Manual bound: residual of the unpenalized-only fit, standardized correlations.
  const MatrixXd U = p.X.leftCols(2);
  const VectorXd r = p.y - U * (U.transpose() * U).ldlt().solve(U.transpose() * p.y);
  double manual = 0.0;
  for (Index j = 2; j < 10; ++j) {
    const auto c = p.X.col(j);
    const double s = std::sqrt((c.array() - c.mean()).square().mean());
    manual = std::max(manual, std::abs(c.dot(r)) / 20.0 / s);
  }
  CHECK(std::abs(manual - lmax) < 1e-12 * std::max(1.0, lmax));
}

TEST_CASE("KKT conditions hold on random fits") {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    Problem p = make_problem(rng, 30 + Index(rng.below(150)), 1 + Index(rng.below(4)), 5 + Index(rng.below(40)));
    p.spec.standardize_penalized = t % 2 == 0;
    const double lambda = lambda_max(p.X, p.y, p.spec) * std::pow(10.0, -2.5 * rng.uniform());
    const PenalizedFit fit = fit_lasso(p.X, p.y, p.spec, lambda);
    CHECK(kkt_violation(p.X, p.y, p.spec, fit) <= 1e-6 * scale_of(p.y));
    CHECK(fit.active_count <= p.spec.penalized_cols.size());
    CHECK(fit.residual_variance >= 0.0);
    CHECK(std::abs(fit.residual_variance - (p.y - p.X * fit.coefficients).squaredNorm() / double(p.y.size())) <
          1e-12 * std::max(1.0, fit.residual_variance));
  }
}

TEST_CASE("objective is nonincreasing across sweeps") {
  Rng rng(5);
  const Problem p = make_problem(rng, 120, 3, 30);
  std::vector<double> trace;
  SolverOptions opts;
  opts.objective_trace = &trace;
  const double lambda = 0.05 * lambda_max(p.X, p.y, p.spec);
  const PenalizedFit fit = fit_lasso(p.X, p.y, p.spec, lambda, opts);
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12 * std::abs(trace[i - 1]));
  // Trace is the profiled objective, which equals the full objective at the returned coefficients.
  CHECK(std::abs(trace.back() - objective(p, fit.coefficients, lambda)) < 1e-8 * std::max(1.0, trace.back()));
}

TEST_CASE("standardization round trip") {
  Rng rng(6);
  Problem p = make_problem(rng, 90, 2, 10);
  const double lambda = 0.1 * lambda_max(p.X, p.y, p.spec);
  const PenalizedFit fit = fit_lasso(p.X, p.y, p.spec, lambda);
  // Solve the same problem on pre-standardized columns without internal scaling.
  MatrixXd Xs = p.X;
  VectorXd s = VectorXd::Ones(p.X.cols());
  for (auto k : p.spec.penalized_cols) {
    const auto c = p.X.col(Index(k));
    s(Index(k)) = std::sqrt((c.array() - c.mean()).square().mean());
    Xs.col(Index(k)) /= s(Index(k));
  }
  DesignSpec raw = p.spec;
  raw.standardize_penalized = false;
  const PenalizedFit fs = fit_lasso(Xs, p.y, raw, lambda);
  CHECK((p.X * fit.coefficients - Xs * fs.coefficients).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("fit_lasso errors") {
  Rng rng(7);
  Problem p = make_problem(rng, 30, 2, 5);
  MatrixXd bad = p.X;
  bad(3, 3) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(fit_lasso(bad, p.y, p.spec, 0.1), DataError);
  CHECK_THROWS_AS(fit_lasso(p.X, p.y, p.spec, -1.0), ConfigError);
  CHECK_THROWS_AS(fit_lasso(p.X.topRows(1), p.y.head(1), p.spec, 0.1), ConfigError);
  MatrixXd constant = p.X;
  constant.col(4).setConstant(2.0);
  CHECK_THROWS_AS(fit_lasso(constant, p.y, p.spec, 0.1), ConfigError);
  CHECK_THROWS_AS((DesignSpec{{0, 1}, {1, 2}}.validate(3)), ConfigError);
  CHECK_THROWS_AS((DesignSpec{{0}, {1}}.validate(3)), ConfigError);
  SolverOptions tight;
  tight.max_sweeps = 1;
  tight.tolerance = 1e-15;
  CHECK_THROWS_AS(fit_lasso(p.X, p.y, p.spec, 1e-4 * lambda_max(p.X, p.y, p.spec), tight), ConvergenceError);
}

TEST_CASE("lambda grid") {
  Rng rng(8);
  const Problem p = make_problem(rng, 50, 2, 10);
  const auto grid = lambda_grid(p.X, p.y, p.spec, 100, 1e-4);
  REQUIRE(grid.size() == 100);
  CHECK(grid.front() == doctest::Approx(lambda_max(p.X, p.y, p.spec)));
  CHECK(grid.back() == doctest::Approx(1e-4 * grid.front()));
  CHECK(std::is_sorted(grid.rbegin(), grid.rend()));
}

TEST_CASE("cv on pure-noise penalized columns stays sparse") {
  Rng rng(9);
  std::vector<std::size_t> active;
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = 100;
    MatrixXd X(n, 12);
    X.col(0).setOnes();
    X.col(1) = testutil::normals(rng, n);
    for (Index j = 2; j < 12; ++j) X.col(j) = testutil::normals(rng, n);
    const VectorXd y = 2.0 * X.col(1) + testutil::normals(rng, n);
    DesignSpec spec{{0, 1}, {2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
    CvConfig cv;
    cv.seed = std::uint64_t(rep);
    active.push_back(fit_lasso_cv(X, y, spec, cv).active_count);
  }
  std::nth_element(active.begin(), active.begin() + 25, active.end());
  CHECK(active[25] <= 2);
}

TEST_CASE("cv grid of one and tie-break toward larger lambda") {
  Rng rng(10);
  const Problem p = make_problem(rng, 40, 2, 6);
  const auto one = cv_lambda(p.X, p.y, p.spec, {0.3}, 5, 1);
  CHECK(one.lambda == 0.3);
  CHECK(one.cv_table.size() == 1);

  // y exactly linear in the unpenalized block: CV error ~0 at every lambda.
  const VectorXd y = p.X.leftCols(2) * Eigen::Vector2d(1.0, -2.0);
  const auto grid = std::vector<double>{1.0, 0.5, 0.1, 0.01};
  const auto sel = cv_lambda(p.X, y, p.spec, grid, 5, 1);
  CHECK(sel.lambda == 1.0);
  for (const auto& r : sel.cv_table) CHECK(r.cv_error < 1e-20);
}

TEST_CASE("cv is seed-deterministic and validates folds") {
  Rng rng(11);
  const Problem p = make_problem(rng, 60, 2, 10);
  CvConfig cv;
  cv.seed = 3;
  VectorXd oof1, oof2;
  const PenalizedFit a = fit_lasso_cv(p.X, p.y, p.spec, cv, &oof1);
  const PenalizedFit b = fit_lasso_cv(p.X, p.y, p.spec, cv, &oof2);
  CHECK(a.lambda == b.lambda);
  CHECK(a.coefficients == b.coefficients);
  CHECK(oof1 == oof2);
  CHECK(a.cv_table.size() == 100);
  const auto grid = lambda_grid(p.X, p.y, p.spec, 10);
  CHECK_THROWS_AS(cv_lambda(p.X, p.y, p.spec, grid, 1, 1), ConfigError);
  CHECK_THROWS_AS(cv_lambda(p.X.topRows(5), p.y.head(5), p.spec, grid, 5, 1), ConfigError);
  CHECK_THROWS_AS(cv_lambda(p.X, p.y, p.spec, {}, 5, 1), ConfigError);
}
