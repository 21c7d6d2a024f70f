#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace spatialdr {

/// Partition of design columns into unpenalized and L1-penalized sets.
/// An intercept, when wanted, is an explicit all-ones unpenalized column.
struct DesignSpec {
  std::vector<std::size_t> unpenalized_cols;
  std::vector<std::size_t> penalized_cols;
  bool standardize_penalized = true;

  /// Throws ConfigError unless the sets are disjoint and cover 0..p-1.
  void validate(std::size_t p) const;
};

struct CvRecord {
  double lambda = 0.0;
  double cv_error = 0.0;  // mean held-out squared error
};

struct PenalizedFit {
  Eigen::VectorXd coefficients;  // original scale, one per design column
  double lambda = 0.0;
  std::size_t active_count = 0;  // penalized coefficients that are nonzero
  double residual_variance = 0.0;  // mean squared residual (denominator n)
  std::vector<CvRecord> cv_table;
  std::size_t sweeps = 0;
};

struct SolverOptions {
  double tolerance = 1e-7;  // relative to max(1, |y|_inf)
  std::size_t max_sweeps = 100000;
  /// When set, receives the objective after every coordinate sweep.
  std::vector<double>* objective_trace = nullptr;
};

/// Minimizes (1/2n)|y - Xb|^2 + lambda * sum_{k penalized} s_k |b_k| by cyclic
/// coordinate descent with covariance updates, where s_k is the column's
/// standard deviation when standardize_penalized is set and 1 otherwise.
/// Unpenalized coefficients are profiled out exactly (the penalized problem is
/// solved on the residual-maker projection of the unpenalized block).
PenalizedFit fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const DesignSpec& spec, double lambda,
                       const SolverOptions& options = {});

/// Smallest lambda at which every penalized coefficient is zero.
double lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const DesignSpec& spec);

/// `count` log-spaced values from lambda_max down to min_ratio * lambda_max.
std::vector<double> lambda_grid(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const DesignSpec& spec,
                                std::size_t count = 100, double min_ratio = 1e-4);

struct CvConfig {
  std::size_t folds = 10;
  std::uint64_t seed = 1;
  std::size_t grid_size = 100;
  double min_ratio = 1e-4;
  std::optional<std::vector<double>> grid;  // explicit descending grid overrides the default
  SolverOptions solver;
};

struct CvSelection {
  double lambda = 0.0;
  std::vector<CvRecord> cv_table;
  Eigen::VectorXd out_of_fold;  // held-out predictions at the selected lambda
};

/// K-fold CV over a descending grid. Picks the lambda with the least mean
/// held-out squared error; near-ties go to the larger lambda.
CvSelection cv_lambda(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const DesignSpec& spec,
                      const std::vector<double>& grid, std::size_t folds, std::uint64_t seed,
                      const SolverOptions& options = {});

/// Chooses lambda by CV (default grid unless config.grid is set) and refits on all rows.
PenalizedFit fit_lasso_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const DesignSpec& spec,
                          const CvConfig& config, Eigen::VectorXd* out_of_fold = nullptr);

/// Largest violation of the lasso optimality conditions, in gradient units:
/// unpenalized |g_k|, active | g_k - lambda s_k sign(b_k) |, inactive (|g_k| - lambda s_k)_+,
/// where g_k = (1/n) x_k'(y - Xb).
double kkt_violation(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const DesignSpec& spec,
                     const PenalizedFit& fit);

}  // namespace spatialdr
