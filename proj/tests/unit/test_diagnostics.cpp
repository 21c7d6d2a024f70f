#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "spatialdr/diagnostics.hpp"
#include "spatialdr/error.hpp"
#include "spatialdr/synthetic.hpp"

using namespace spatialdr;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
AdjacencyGraph path3() { return AdjacencyGraph(3, {{0, 1}, {1, 2}}); }

// Moran variance under normality recomputed from dense W.
double brute_variance(const AdjacencyGraph& g) {
  const MatrixXd W = g.dense_adjacency();
  const double n = double(g.size());
  const double s0 = W.sum();
  const double s1 = 0.5 * (W + W.transpose()).array().square().sum();
  const double s2 = (W.rowwise().sum() + W.colwise().sum().transpose()).array().square().sum();
  const double e = -1.0 / (n - 1.0);
  return (n * n * s1 - n * s2 + 3.0 * s0 * s0) / ((n * n - 1.0) * s0 * s0) - e * e;
}
}  // namespace

TEST_CASE("path-3 Moran values") {
  CHECK(moran_statistic(VectorXd{{1.0, -2.0, 1.0}}, path3()) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::abs(moran_statistic(VectorXd{{1.0, 0.0, -1.0}}, path3())) < 1e-15);
  const MoranResult r = morans_i(VectorXd{{1.0, -2.0, 1.0}}, path3());
  CHECK(r.expected == doctest::Approx(-0.5));
}

TEST_CASE("analytic variance matches the general formula") {
  const auto g = rook_lattice(4, 5);
  Rng rng(1);
  const MoranResult r = morans_i(testutil::normals(rng, 20), g);
  CHECK(r.variance == doctest::Approx(brute_variance(g)).epsilon(1e-12));
  CHECK(r.z == doctest::Approx((r.I - r.expected) / std::sqrt(r.variance)).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(2.0 * (1.0 - normal_cdf(std::abs(r.z)))).epsilon(1e-12));
}

TEST_CASE("Moran errors") {
  CHECK_THROWS_AS(morans_i(VectorXd::Constant(3, 2.0), path3()), NumericalError);
  CHECK_THROWS_AS(morans_i(VectorXd{{1.0, 2.0, 3.0}}, AdjacencyGraph(3, {})), ConfigError);
  CHECK_THROWS_AS(morans_i(VectorXd{{1.0, 2.0}}, path3()), ConfigError);
  CHECK_THROWS_AS(parse_moran_method("geary"), ConfigError);
}

TEST_CASE("permutation test is reproducible and bounded") {
  const auto g = rook_lattice(6, 6);
  Rng rng(2);
  const VectorXd v = testutil::normals(rng, 36);
  MoranOptions opts{MoranMethod::Permutation, 199, 17};
  const MoranResult a = morans_i(v, g, opts);
  const MoranResult b = morans_i(v, g, opts);
  CHECK(a.p_value == b.p_value);
  CHECK(a.p_value >= 1.0 / 200.0);
  CHECK(a.p_value <= 1.0);
  CHECK(a.permutations == 199);
  // Strong smooth pattern: smallest attainable p.
  VectorXd smooth(36);
  for (Index i = 0; i < 36; ++i) smooth(i) = double(i / 6);
  CHECK(morans_i(smooth, g, opts).p_value == doctest::Approx(1.0 / 200.0));
}

TEST_CASE("analytic and permutation tests agree on most draws") {
  const auto g = rook_lattice(10, 10);
  const auto dec = synthetic::lattice_decomposition(10);
  int agree = 0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    Rng rng = Rng::derive(55, std::uint64_t(r));
    VectorXd v = testutil::normals(rng, 100);
    if (r % 2 == 0) v += dec.vectors().leftCols(5) * testutil::normals(rng, 5) * (0.5 * rng.uniform());
    const bool a = morans_i(v, g).p_value < 0.05;
    const bool p = morans_i(v, g, {MoranMethod::Permutation, 499, std::uint64_t(r)}).p_value < 0.05;
    agree += a == p;
  }
  CHECK(agree >= 90);
}

TEST_CASE("calibration on iid noise") {
  const auto g = rook_lattice(10, 10);
  int reject = 0;
  for (int r = 0; r < 500; ++r) {
    Rng rng = Rng::derive(77, std::uint64_t(r));
    reject += morans_i(testutil::normals(rng, 100), g).p_value < 0.05;
  }
  CHECK(reject / 500.0 >= 0.02);
  CHECK(reject / 500.0 <= 0.09);
}

TEST_CASE("fit metrics") {
  const VectorXd y{{1.0, 2.0, 4.0, 7.0}};
  const FitMetrics perfect = fit_metrics(y, y);
  CHECK(perfect.rmse == 0.0);
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.r2 == 1.0);
  CHECK(fit_metrics(y, VectorXd::Constant(4, y.mean())).r2 == doctest::Approx(0.0).scale(1.0));

  const VectorXd yh{{1.5, 2.0, 3.0, 8.0}};  // residuals -0.5, 0, 1, -1; SST = 21
  const FitMetrics m = fit_metrics(y, yh, 3);
  CHECK(m.rmse == doctest::Approx(std::sqrt(2.25 / 4.0)));
  CHECK(m.mae == doctest::Approx(2.5 / 4.0));
  CHECK(m.r2 == doctest::Approx(1.0 - 2.25 / 21.0));
  CHECK(m.active_bases == 3);

  const FitMetrics affine = fit_metrics(3.0 * y.array() + 2.0, 3.0 * yh.array() + 2.0);
  CHECK(affine.r2 == doctest::Approx(m.r2).epsilon(1e-14));
  CHECK_THROWS_AS(fit_metrics(VectorXd::Constant(4, 1.0), yh), DataError);
  CHECK_THROWS_AS(fit_metrics(y, yh.head(3)), ConfigError);
}

TEST_CASE("sweep on a rank-limited field") {
  synthetic::DgpSpec spec;
  spec.grid_side = 20;
  spec.spatial_rank = 20;
  spec.latent_sd = 1.0;
  spec.noise_sd_outcome = 0.5;
  spec.confounding_strength = 1.0;
  spec.seed = 3;
  const synthetic::Sample s = synthetic::generate(spec);
  SweepConfig cfg;
  const SweepReport icar = basis_sweep(s.dataset, "A", s.graph, BasisFamily::Icar, {10, 20, 40}, cfg);
  REQUIRE(icar.selection.rows.size() == 3);
  CHECK(icar.selection.rows[0].moran_p < 0.05);
  CHECK(icar.selection.passed);
  CHECK(icar.selection.K <= 20);
  const SweepReport one = basis_sweep(s.dataset, "A", s.graph, BasisFamily::Mem, {10}, cfg);
  CHECK(one.selection.rows.size() == 1);
  CHECK(one.selection.K == 10);
  const std::string csv = sweep_csv({icar, one});
  CHECK(csv.rfind("K,family,rmse,mae,r2,active_bases,moran_p\n10,ICAR,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}
