#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "spatialdr/dr_estimator.hpp"
#include "spatialdr/error.hpp"
#include "spatialdr/synthetic.hpp"

using namespace spatialdr;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
struct Inputs {
  VectorXd a, y, mu, g, w;
};

Inputs random_inputs(Rng& rng, Index n) {
  Inputs in;
  in.a = testutil::normals(rng, n);
  in.y = 0.5 * in.a + testutil::normals(rng, n);
  in.mu = 0.4 * in.a + testutil::normals(rng, n, 0.3);
  in.g = in.y + testutil::normals(rng, n, 0.5);
  in.w = VectorXd::Ones(n) + 0.5 * testutil::normals(rng, n, 0.2).cwiseAbs();
  return in;
}

synthetic::DgpSpec small_spec(std::uint64_t seed) {
  synthetic::DgpSpec s;
  s.grid_side = 15;
  s.seed = seed;
  return s;
}
}  // namespace

TEST_CASE("make_plan") {
  const CrossFitPlan ten = make_plan(10, 10, 1);
  std::set<std::size_t> labels(ten.assignment.begin(), ten.assignment.end());
  CHECK(labels.size() == 10);
  const CrossFitPlan three = make_plan(10, 3, 1);
  std::multiset<std::size_t> sizes;
  for (std::size_t k = 0; k < 3; ++k) sizes.insert(three.members(k).size());
  CHECK(sizes == std::multiset<std::size_t>{3, 3, 4});
  CHECK(make_plan(10, 3, 1).assignment == three.assignment);
  CHECK_THROWS_AS(make_plan(10, 11, 1), ConfigError);
  CHECK_THROWS_AS(make_plan(10, 1, 1), ConfigError);
  for (std::size_t k = 0; k < 3; ++k) CHECK(three.members(k).size() + three.complement(k).size() == 10);
}

TEST_CASE("zero outcome residuals give no correction") {
  Rng rng(1);
  const Inputs in = random_inputs(rng, 30);
  const DrResult r = dr_estimate(in.a, in.y, in.mu, in.y, in.w, 0.7);
  CHECK(r.correction == 0.0);
  CHECK(r.tau_hat == 0.7);
}

TEST_CASE("OLS orthogonality: the DR estimate reproduces the OLS slope") {
  Rng rng(2);
  const Inputs in = random_inputs(rng, 20);
  MatrixXd D(20, 2);
  D.col(0).setOnes();
  D.col(1) = in.a;
  const VectorXd b = (D.transpose() * D).ldlt().solve(D.transpose() * in.y);
  const DrResult r = dr_estimate(in.a, in.y, VectorXd::Constant(20, in.a.mean()), D * b, VectorXd::Ones(20), b(1));
  CHECK(std::abs(r.tau_hat - b(1)) < 1e-8);
  CHECK(std::abs(r.correction) < 1e-8);
}

TEST_CASE("CI, SE identity and centred influence") {
  Rng rng(3);
  const Inputs in = random_inputs(rng, 200);
  const DrResult r = dr_estimate(in.a, in.y, in.mu, in.g, in.w, 0.3);
  CHECK(r.ci_low == r.tau_hat - 1.96 * r.se);
  CHECK(r.ci_high == r.tau_hat + 1.96 * r.se);
  CHECK(r.se >= 0.0);
  CHECK(std::abs(r.se * r.se * 200.0 * 200.0 - r.influence.squaredNorm()) < 1e-10 * r.influence.squaredNorm());
  const double sd = std::sqrt((r.influence.array() - r.influence.mean()).square().mean());
  CHECK(std::abs(r.influence.mean()) < 1e-6 * sd);
  CHECK(r.correction == doctest::Approx(r.tau_hat - r.beta_hat));
}

TEST_CASE("outcome rescaling scales tau, se, beta and influence") {
  Rng rng(4);
  const Inputs in = random_inputs(rng, 50);
  const double c = 2.5;
  const DrResult a = dr_estimate(in.a, in.y, in.mu, in.g, in.w, 0.3);
  const DrResult b = dr_estimate(in.a, c * in.y, in.mu, c * in.g, in.w, c * 0.3);
  CHECK(b.tau_hat == doctest::Approx(c * a.tau_hat).epsilon(1e-13));
  CHECK(b.se == doctest::Approx(c * a.se).epsilon(1e-13));
  CHECK((b.influence - c * a.influence).cwiseAbs().maxCoeff() < 1e-12 * a.influence.cwiseAbs().maxCoeff());
}

TEST_CASE("near-zero denominator is refused") {
  Rng rng(5);
  const Inputs in = random_inputs(rng, 30);
  CHECK_THROWS_AS(dr_estimate(in.a, in.y, in.a, in.g, in.w, 0.3), NumericalError);
  CHECK_THROWS_AS(dr_estimate(in.a, in.y.head(10), in.mu, in.g, in.w, 0.3), ConfigError);
}

TEST_CASE("cross-fitting hygiene and perfect outcome nuisance") {
  Rng rng(6);
  const Index n = 120;
  const VectorXd x = testutil::normals(rng, n);
  const VectorXd a = 0.5 * x + testutil::normals(rng, n);
  const VectorXd y = (2.0 * a - 1.0 * x).array() + 0.5;  // no noise
  const Dataset d(testutil::ids(n), y, {{"A", a}}, {{"x", x}});
  MatrixXd Z(n, 4);
  for (Index j = 0; j < 4; ++j) Z.col(j) = testutil::normals(rng, n);
  const CrossFitPlan plan = make_plan(std::size_t(n), 5, 9);
  EstimatorConfig cfg;
  const CrossFitResult cf = crossfit_nuisances(d, "A", Z, plan, cfg);
  CHECK((cf.g_hat - y).cwiseAbs().maxCoeff() < 1e-6);
  REQUIRE(cf.folds.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    const auto& rows = cf.folds[k].training_rows;
    for (auto i : plan.members(k)) CHECK(std::find(rows.begin(), rows.end(), i) == rows.end());
    CHECK(rows.size() + plan.members(k).size() == std::size_t(n));
  }
}

TEST_CASE("independent treatment: mu-hat is near the training mean") {
  Rng rng(7);
  const Index n = 400;
  const VectorXd a = testutil::normals(rng, n, 2.0);
  const Dataset d(testutil::ids(n), testutil::normals(rng, n), {{"A", a}}, {});
  MatrixXd Z(n, 5);
  for (Index j = 0; j < 5; ++j) Z.col(j) = testutil::normals(rng, n);
  const CrossFitPlan plan = make_plan(std::size_t(n), 10, 3);
  const CrossFitResult cf = crossfit_nuisances(d, "A", Z, plan, EstimatorConfig{});
  const double sd = 2.0;
  for (std::size_t k = 0; k < 10; ++k) {
    double mean = 0.0;
    for (auto i : plan.complement(k)) mean += a(Index(i));
    mean /= double(plan.complement(k).size());
    for (auto i : plan.members(k)) CHECK(std::abs(cf.mu_hat(Index(i)) - mean) < 3.0 * sd / std::sqrt(double(n)));
  }
}

TEST_CASE("fold failures carry the fold index") {
  Rng rng(8);
  const Index n = 30;
  const VectorXd x = testutil::normals(rng, n);
  const Dataset d(testutil::ids(n), testutil::normals(rng, n), {{"A", testutil::normals(rng, n)}}, {{"x", x}});
  MatrixXd Z(n, 2);
  Z.col(0) = testutil::normals(rng, n);
  Z.col(1) = testutil::normals(rng, n);
  EstimatorConfig cfg;
  cfg.cv.folds = 50;  // more inner folds than training rows
  try {
    crossfit_nuisances(d, "A", Z, make_plan(std::size_t(n), 3, 1), cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("fold 0") != std::string::npos);
  }
}

TEST_CASE("end-to-end on a small lattice recovers tau and is thread-independent") {
  const synthetic::Sample s = synthetic::generate(small_spec(3));
  const MatrixXd Z = synthetic::lattice_decomposition(15).leading(20).Z;
  EstimatorConfig cfg;
  cfg.folds = 5;
  const DrResult one = run_treatment(s.dataset, "A", Z, s.graph, cfg);
  cfg.threads = 4;
  const DrResult four = run_treatment(s.dataset, "A", Z, s.graph, cfg);
  CHECK(one.tau_hat == four.tau_hat);
  CHECK(one.se == four.se);
  CHECK(std::abs(one.tau_hat - 1.0) < 3.0 * one.se);
  REQUIRE(one.moran.has_value());
  CHECK(one.fold_records.size() == 5);
  CHECK(one.K == 20);
  CHECK(one.confounder_coefficients.size() == 3);
  CHECK(one.weight_summary.min > 0.0);
}

TEST_CASE("two folds and ten folds both recover tau") {
  const synthetic::Sample s = synthetic::generate(small_spec(4));
  const MatrixXd Z = synthetic::lattice_decomposition(15).leading(20).Z;
  for (std::size_t folds : {2u, 10u}) {
    EstimatorConfig cfg;
    cfg.folds = folds;
    const DrResult r = run_treatment(s.dataset, "A", Z, s.graph, cfg);
    CHECK(std::abs(r.tau_hat - 1.0) < 3.0 * r.se);
  }
}

TEST_CASE("zero effect is covered") {
  synthetic::DgpSpec spec = small_spec(5);
  spec.tau = 0.0;
  const synthetic::Sample s = synthetic::generate(spec);
  const MatrixXd Z = synthetic::lattice_decomposition(15).leading(20).Z;
  const DrResult r = run_treatment(s.dataset, "A", Z, s.graph, EstimatorConfig{});
  CHECK(r.ci_low <= 0.0);
  CHECK(r.ci_high >= 0.0);
}
