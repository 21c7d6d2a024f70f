#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spatialdr/data_model.hpp"
#include "spatialdr/diagnostics.hpp"
#include "spatialdr/gps.hpp"
#include "spatialdr/graph.hpp"
#include "spatialdr/penalized_regression.hpp"

namespace spatialdr {

/// Fold labels for cross-fitting; sizes differ by at most one.
struct CrossFitPlan {
  std::size_t n = 0;
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> assignment;

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

CrossFitPlan make_plan(std::size_t n, std::size_t folds, std::uint64_t seed);

struct FoldRecord {
  std::size_t fold = 0;
  double lambda_gps = 0.0;
  double lambda_outcome = 0.0;
  std::size_t active_gps = 0;
  std::size_t active_outcome = 0;
  double beta_outcome = 0.0;  // treatment coefficient of this fold's outcome model
  std::vector<std::size_t> training_rows;
};

struct CrossFitResult {
  Eigen::VectorXd mu_hat;  // cross-fitted treatment means
  Eigen::VectorXd g_hat;   // cross-fitted outcome means, treatment term included
  std::vector<FoldRecord> folds;
};

struct EstimatorConfig {
  CvConfig cv;
  std::size_t folds = 10;
  std::uint64_t seed = 1;
  MarginalDensity marginal = MarginalDensity::Normal;
  std::optional<Truncation> truncation;
  MoranOptions moran;
  std::size_t threads = 1;
  /// Spatial basis columns enter these nuisance models only when set.
  bool basis_in_gps = true;
  bool basis_in_outcome = true;
};

/// For every unit in fold k, mu-hat and g-hat come from models fitted on the
/// other folds, each with lambda chosen by CV inside the training rows.
CrossFitResult crossfit_nuisances(const Dataset& dataset, const std::string& treatment_name, const Eigen::MatrixXd& Z,
                                  const CrossFitPlan& plan, const EstimatorConfig& config);

struct WeightSummary {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct DrResult {
  std::string treatment_name;
  double tau_hat = 0.0;
  double beta_hat = 0.0;
  double correction = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Eigen::VectorXd influence;
  double denominator = 0.0;

  // Filled by run_treatment.
  std::optional<MoranResult> moran;
  WeightSummary weight_summary;
  std::optional<std::pair<double, double>> truncation_bounds;
  std::vector<FoldRecord> fold_records;
  double lambda_outcome_full = 0.0;
  std::size_t active_outcome_full = 0;
  double lambda_gps_full = 0.0;
  std::size_t active_gps_full = 0;
  double gps_sigma2 = 0.0;
  double outcome_residual_variance = 0.0;
  std::vector<std::pair<std::string, double>> confounder_coefficients;
  std::vector<BalanceRow> balance;
  MarginalDensity marginal = MarginalDensity::Normal;
  std::size_t n = 0;
  std::size_t K = 0;
};

inline constexpr double kNormalQuantile975 = 1.96;

/// tau = beta + mean(w (A - mu)(y - g)) / D with D = mean((A - mu) A);
/// influence phi_j = [w_j (A_j - mu_j)(y_j - g_j) + (A_j - mu_j) A_j (beta - tau)] / D;
/// se = sqrt(sum phi^2) / n; CI = tau -/+ 1.96 se.
DrResult dr_estimate(const Eigen::VectorXd& treatment, const Eigen::VectorXd& outcome, const Eigen::VectorXd& mu_hat,
                     const Eigen::VectorXd& g_hat, const Eigen::VectorXd& weights, double beta_hat);

DrResult dr_estimate(const Dataset& dataset, const std::string& treatment_name, const Eigen::VectorXd& mu_hat,
                     const Eigen::VectorXd& g_hat, const WeightVector& weights, double beta_hat);

/// Full pipeline for one treatment: cross-fit nuisances, full-sample GPS and
/// weights, full-sample outcome model for beta-hat, DR estimate, and a Moran
/// test on the cross-fitted outcome residuals y - g-hat.
DrResult run_treatment(const Dataset& dataset, const std::string& treatment_name, const Eigen::MatrixXd& Z,
                       const AdjacencyGraph& graph, const EstimatorConfig& config);

}  // namespace spatialdr
