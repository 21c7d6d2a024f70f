#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spatialdr/data_model.hpp"
#include "spatialdr/penalized_regression.hpp"

namespace spatialdr {

/// How the marginal treatment density in the weight numerator is estimated.
/// Normal: N(mean, var) with the sample moments. Kde: Gaussian kernel density
/// with Silverman's rule-of-thumb bandwidth.
enum class MarginalDensity { Normal, Kde };

std::string to_string(MarginalDensity mode);
MarginalDensity parse_marginal_density(const std::string& text);

/// Generalized propensity score: A | X, Z ~ N(mu(X, Z), sigma2).
struct GpsModel {
  PenalizedFit mean_fit;
  Eigen::VectorXd fitted_mean;  // mu-hat for each unit of the fitting data
  double sigma2 = 0.0;
  double marginal_mean = 0.0;
  double marginal_var = 0.0;
  MarginalDensity marginal = MarginalDensity::Normal;
  Eigen::VectorXd treatment_sample;  // kept for the KDE marginal
  double kde_bandwidth = 0.0;

  double log_marginal_density(double a) const;
  double marginal_density(double a) const { return std::exp(log_marginal_density(a)); }
};

/// Fits the treatment mean model on [1, confounders] + Z (basis penalized).
/// Z may have zero columns. Throws NumericalError for a constant treatment.
GpsModel fit_gps(const Dataset& dataset, const std::string& treatment_name, const Eigen::MatrixXd& Z,
                 const CvConfig& cv, MarginalDensity marginal = MarginalDensity::Normal);

/// Normal density phi(a; mu, sigma2).
double gps_density(double a, double mu, double sigma2);
double gps_log_density(double a, double mu, double sigma2);
/// phi(a; mu, model.sigma2).
double gps_density(const GpsModel& model, double a, double mu);

/// Symmetric percentile clamping, e.g. {1, 99}.
struct Truncation {
  double lower_percentile = 1.0;
  double upper_percentile = 99.0;
};

struct WeightVector {
  Eigen::VectorXd w;
  std::optional<std::pair<double, double>> truncation_bounds;  // clamp values actually applied

  double min() const { return w.minCoeff(); }
  double mean() const { return w.mean(); }
  double max() const { return w.maxCoeff(); }
};

/// w_j = f(A_j) / phi(A_j; mu_j, sigma2), never renormalized.
/// Without truncation, a conditional density below 1e-300 is an error.
WeightVector stabilized_weights(const GpsModel& model, const Eigen::VectorXd& treatment,
                                const std::optional<Truncation>& truncation = std::nullopt);
WeightVector stabilized_weights(const GpsModel& model, const Dataset& dataset, const std::string& treatment_name,
                                const std::optional<Truncation>& truncation = std::nullopt);

/// Type-7 (linear interpolation) sample quantile, p in [0, 1].
double quantile(Eigen::VectorXd values, double p);

double pearson_correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
/// Correlation from weighted means and weighted (co)variances normalized by sum(w).
double weighted_correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w);

struct BalanceRow {
  std::string covariate;
  double rho_unweighted = 0.0;
  double rho_weighted = 0.0;
};

/// Treatment-covariate correlations before and after weighting (love-plot data).
/// When a basis is given, one summary row "basis_mean_abs" holds the mean
/// absolute correlation over its columns.
std::vector<BalanceRow> balance_table(const Dataset& dataset, const std::string& treatment_name,
                                      const WeightVector& weights, const Eigen::MatrixXd& basis = {});

/// CSV: confounder,rho_unweighted,rho_weighted
std::string balance_csv(const std::vector<BalanceRow>& rows);

}  // namespace spatialdr
