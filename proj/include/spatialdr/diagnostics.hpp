#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spatialdr/graph.hpp"
#include "spatialdr/penalized_regression.hpp"
#include "spatialdr/spectral_basis.hpp"

namespace spatialdr {

class Dataset;

enum class MoranMethod { Analytic, Permutation };

std::string to_string(MoranMethod method);
MoranMethod parse_moran_method(const std::string& text);

struct MoranOptions {
  MoranMethod method = MoranMethod::Analytic;
  std::size_t permutations = 999;
  std::uint64_t seed = 1;
};

/// Global Moran's I on a binary symmetric graph.
///
/// The analytic p-value is two-sided under the normality assumption,
/// E[I] = -1/(n-1) and
///   Var[I] = (n^2 S1 - n S2 + 3 S0^2) / ((n^2 - 1) S0^2) - E[I]^2.
/// The permutation p-value is (1 + #{|I_b - E| >= |I - E|}) / (B + 1).
struct MoranResult {
  double I = 0.0;
  double expected = 0.0;
  double variance = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  MoranMethod method = MoranMethod::Analytic;
  std::size_t permutations = 0;
};

MoranResult morans_i(const Eigen::VectorXd& values, const AdjacencyGraph& graph, const MoranOptions& options = {});

/// (n / S0) * e'We / e'e on centred values, without any test.
double moran_statistic(const Eigen::VectorXd& values, const AdjacencyGraph& graph);

struct FitMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  std::size_t active_bases = 0;
};

FitMetrics fit_metrics(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat, std::size_t active_bases = 0);
FitMetrics fit_metrics(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat, const PenalizedFit& fit);

struct SweepConfig {
  CvConfig cv;
  double alpha = 0.05;
  MoranOptions moran;
  PrecisionSpec precision;
};

struct SweepReport {
  BasisFamily family = BasisFamily::Icar;
  KSelection selection;
};

/// Table-1-style sweep of the outcome model y ~ [1, A, X] + Z_K over K_grid.
/// Metrics and the Moran test use out-of-fold predictions at the
/// cross-validated penalty; active_bases comes from the full-data refit.
SweepReport basis_sweep(const Dataset& dataset, const std::string& treatment_name, const AdjacencyGraph& graph,
                        BasisFamily family, const std::vector<std::size_t>& K_grid, const SweepConfig& config);

/// Same, with a precomputed decomposition of `graph`.
SweepReport basis_sweep(const Dataset& dataset, const std::string& treatment_name, const AdjacencyGraph& graph,
                        const SpectralDecomposition& decomposition, const std::vector<std::size_t>& K_grid,
                        const SweepConfig& config);

/// CSV: K,family,rmse,mae,r2,active_bases,moran_p
std::string sweep_csv(const std::vector<SweepReport>& reports);

double normal_cdf(double z);

}  // namespace spatialdr
