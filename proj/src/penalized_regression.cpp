#include "spatialdr/penalized_regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "spatialdr/error.hpp"
#include "spatialdr/rng.hpp"

namespace spatialdr {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double tolerance_scale(const VectorXd& y) { return std::max(1.0, y.size() ? y.cwiseAbs().maxCoeff() : 0.0); }

MatrixXd select_columns(const MatrixXd& X, const std::vector<std::size_t>& cols) {
  MatrixXd out(X.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = X.col(static_cast<Index>(cols[k]));
  return out;
}

MatrixXd select_rows(const MatrixXd& X, const std::vector<std::size_t>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = X.row(static_cast<Index>(rows[r]));
  return out;
}

VectorXd select_rows(const VectorXd& y, const std::vector<std::size_t>& rows) {
  VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = y(static_cast<Index>(rows[r]));
  return out;
}

// The penalized block after profiling out the unpenalized columns:
//   min_a (1/2n)|My - M Xp S^-1 a|^2 + lambda |a|_1,   b_p = S^-1 a,
// with M the residual maker of Xu and S the diagonal of penalty scales.
class LassoProblem {
 public:
  LassoProblem(const MatrixXd& X, const VectorXd& y, const DesignSpec& spec, const SolverOptions& options)
      : spec_(spec), options_(options), n_(static_cast<double>(X.rows())), scale_(tolerance_scale(y)) {
    if (X.rows() < 2) throw ConfigError("lasso needs at least 2 observations");
    if (X.rows() != y.size()) throw ConfigError("design and response lengths differ");
    if (!X.allFinite() || !y.allFinite()) throw DataError("non-finite values in design or response");
    spec_.validate(static_cast<std::size_t>(X.cols()));

    xu_ = select_columns(X, spec_.unpenalized_cols);
    MatrixXd xp = select_columns(X, spec_.penalized_cols);
    const Index pp = xp.cols();

    scales_ = VectorXd::Ones(pp);
    for (Index k = 0; k < pp; ++k) {
      const double mean = xp.col(k).mean();
      const double sd = std::sqrt((xp.col(k).array() - mean).square().mean());
      const double magnitude = std::max(1.0, xp.col(k).cwiseAbs().maxCoeff());
      if (sd <= 1e-12 * magnitude) {
        throw ConfigError("penalized column " + std::to_string(spec_.penalized_cols[static_cast<std::size_t>(k)]) +
                          " is constant");
      }
      if (spec_.standardize_penalized) scales_(k) = sd;
    }

    y_tilde_ = y;
    x_tilde_ = xp;
    if (xu_.cols() > 0) {
      qr_.compute(xu_);
      if (qr_.rank() < xu_.cols()) {
        throw NumericalError("unpenalized design columns are linearly dependent (rank " + std::to_string(qr_.rank()) +
                             " < " + std::to_string(xu_.cols()) + ")");
      }
      y_tilde_ -= xu_ * qr_.solve(y);
      if (pp > 0) x_tilde_ -= xu_ * qr_.solve(xp);
    }
    for (Index k = 0; k < pp; ++k) x_tilde_.col(k) /= scales_(k);
    gram_ = (x_tilde_.transpose() * x_tilde_) / n_;
    corr_ = (x_tilde_.transpose() * y_tilde_) / n_;
    y_tilde_ss_ = y_tilde_.squaredNorm() / n_;
    coef_ = VectorXd::Zero(pp);
    xp_ = std::move(xp);
    y_ = y;
  }

  double lambda_max() const { return corr_.size() ? corr_.cwiseAbs().maxCoeff() : 0.0; }

  std::size_t penalized_count() const { return static_cast<std::size_t>(coef_.size()); }

  /// Solves at `lambda`, warm-starting from the previous solution.
  std::size_t solve(double lambda) {
    if (lambda < 0.0 || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    lambda_ = lambda;
    const Index pp = coef_.size();
    if (pp == 0) return 0;
    if (lambda == 0.0) {
      coef_ = x_tilde_.completeOrthogonalDecomposition().solve(y_tilde_);
      return 1;
    }
    const double tol = options_.tolerance * scale_;
    VectorXd grad = corr_ - gram_ * coef_;
    for (std::size_t sweep = 1; sweep <= options_.max_sweeps; ++sweep) {
      double max_change = 0.0;
      for (Index k = 0; k < pp; ++k) {
        const double gkk = gram_(k, k);
        double updated = 0.0;
        if (gkk > 1e-14) updated = soft_threshold(grad(k) + gkk * coef_(k), lambda) / gkk;
        const double delta = updated - coef_(k);
        if (delta != 0.0) {
          grad.noalias() -= gram_.col(k) * delta;
          coef_(k) = updated;
          max_change = std::max(max_change, std::abs(delta) * std::sqrt(std::max(gkk, 0.0)));
        }
      }
      if (options_.objective_trace) options_.objective_trace->push_back(objective());
      if (max_change < tol) {
        grad = corr_ - gram_ * coef_;
        if (kkt_gap(grad) <= tol) return sweep;
      }
    }
    grad = corr_ - gram_ * coef_;
    const double gap = kkt_gap(grad);
    throw ConvergenceError("coordinate descent did not converge in " + std::to_string(options_.max_sweeps) +
                               " sweeps (lambda " + std::to_string(lambda) + ", KKT gap " + std::to_string(gap) + ")",
                           gap);
  }

  /// (1/2n)|r|^2 + lambda |a|_1 on the profiled problem.
  double objective() const {
    return 0.5 * (y_tilde_ss_ - 2.0 * coef_.dot(corr_) + coef_.dot(gram_ * coef_)) + lambda_ * coef_.lpNorm<1>();
  }

  /// Coefficients for the full design, in original column order and scale.
  VectorXd coefficients() const {
    const std::size_t p = spec_.unpenalized_cols.size() + spec_.penalized_cols.size();
    VectorXd b = VectorXd::Zero(static_cast<Index>(p));
    VectorXd alpha = coef_.cwiseQuotient(scales_);
    for (std::size_t k = 0; k < spec_.penalized_cols.size(); ++k) {
      b(static_cast<Index>(spec_.penalized_cols[k])) = alpha(static_cast<Index>(k));
    }
    if (xu_.cols() > 0) {
      VectorXd partial = y_;
      if (alpha.size() > 0) partial -= xp_ * alpha;
      const VectorXd bu = qr_.solve(partial);
      for (std::size_t k = 0; k < spec_.unpenalized_cols.size(); ++k) {
        b(static_cast<Index>(spec_.unpenalized_cols[k])) = bu(static_cast<Index>(k));
      }
    }
    return b;
  }

  std::size_t active_count() const {
    return static_cast<std::size_t>((coef_.array() != 0.0).count());
  }

 private:
  double kkt_gap(const VectorXd& grad) const {
    double gap = 0.0;
    for (Index k = 0; k < coef_.size(); ++k) {
      double v;
      if (coef_(k) != 0.0) {
        v = std::abs(grad(k) - lambda_ * (coef_(k) > 0 ? 1.0 : -1.0));
      } else {
        v = std::max(0.0, std::abs(grad(k)) - lambda_);
      }
      // Report in original-column gradient units as well as standardized ones.
      gap = std::max(gap, v * std::max(1.0, scales_(k)));
    }
    return gap;
  }

  DesignSpec spec_;
  SolverOptions options_;
  double n_;
  double scale_;
  double lambda_ = 0.0;
  MatrixXd xu_;
  MatrixXd xp_;
  VectorXd y_;
  Eigen::ColPivHouseholderQR<MatrixXd> qr_;
  VectorXd scales_;
  VectorXd y_tilde_;
  MatrixXd x_tilde_;
  MatrixXd gram_;
  VectorXd corr_;
  double y_tilde_ss_ = 0.0;
  VectorXd coef_;
};

PenalizedFit make_fit(const LassoProblem& problem, const MatrixXd& X, const VectorXd& y, double lambda,
                      std::size_t sweeps) {
  PenalizedFit fit;
  fit.coefficients = problem.coefficients();
  fit.lambda = lambda;
  fit.active_count = problem.active_count();
  fit.residual_variance = (y - X * fit.coefficients).squaredNorm() / static_cast<double>(y.size());
  fit.sweeps = sweeps;
  return fit;
}

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || !std::isfinite(grid[i])) throw ConfigError("lambda grid values must be finite and >= 0");
    if (i > 0 && grid[i] > grid[i - 1]) throw ConfigError("lambda grid must be descending");
  }
}

}  // namespace

void DesignSpec::validate(std::size_t p) const {
  std::vector<int> seen(p, 0);
  for (const auto* group : {&unpenalized_cols, &penalized_cols}) {
    for (std::size_t c : *group) {
      if (c >= p) throw ConfigError("design column index " + std::to_string(c) + " out of range");
      if (seen[c]++) throw ConfigError("design column " + std::to_string(c) + " listed more than once");
    }
  }
  for (std::size_t c = 0; c < p; ++c) {
    if (!seen[c]) throw ConfigError("design column " + std::to_string(c) + " is neither penalized nor unpenalized");
  }
}

PenalizedFit fit_lasso(const MatrixXd& X, const VectorXd& y, const DesignSpec& spec, double lambda,
                       const SolverOptions& options) {
  LassoProblem problem(X, y, spec, options);
  const std::size_t sweeps = problem.solve(lambda);
  return make_fit(problem, X, y, lambda, sweeps);
}

double lambda_max(const MatrixXd& X, const VectorXd& y, const DesignSpec& spec) {
  return LassoProblem(X, y, spec, {}).lambda_max();
}

std::vector<double> lambda_grid(const MatrixXd& X, const VectorXd& y, const DesignSpec& spec, std::size_t count,
                                double min_ratio) {
  if (count == 0) throw ConfigError("lambda grid size must be positive");
  if (!(min_ratio > 0.0 && min_ratio < 1.0)) throw ConfigError("lambda min ratio must lie in (0, 1)");
  const double top = lambda_max(X, y, spec);
  if (!(top > 0.0)) return {0.0};
  std::vector<double> grid(count);
  if (count == 1) {
    grid[0] = top;
    return grid;
  }
  const double step = std::log(min_ratio) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) grid[i] = top * std::exp(step * static_cast<double>(i));
  grid[0] = top;
  return grid;
}

CvSelection cv_lambda(const MatrixXd& X, const VectorXd& y, const DesignSpec& spec, const std::vector<double>& grid,
                      std::size_t folds, std::uint64_t seed, const SolverOptions& options) {
  check_grid(grid);
  const auto n = static_cast<std::size_t>(X.rows());
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (n / folds < 2) {
    throw ConfigError("cross-validation fold with fewer than 2 observations (n=" + std::to_string(n) +
                      ", folds=" + std::to_string(folds) + ")");
  }
  const auto labels = balanced_folds(n, folds, seed);
  const auto g = static_cast<Index>(grid.size());
  MatrixXd predictions(static_cast<Index>(n), g);

  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (labels[i] == k ? test : train).push_back(i);
    const MatrixXd x_train = select_rows(X, train);
    const MatrixXd x_test = select_rows(X, test);
    LassoProblem problem(x_train, select_rows(y, train), spec, options);
    for (Index j = 0; j < g; ++j) {
      problem.solve(grid[static_cast<std::size_t>(j)]);
      const VectorXd pred = x_test * problem.coefficients();
      for (std::size_t r = 0; r < test.size(); ++r) predictions(static_cast<Index>(test[r]), j) = pred(static_cast<Index>(r));
    }
  }

  CvSelection out;
  out.cv_table.reserve(grid.size());
  double best = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < g; ++j) {
    const double err = (y - predictions.col(j)).squaredNorm() / static_cast<double>(n);
    out.cv_table.push_back({grid[static_cast<std::size_t>(j)], err});
    best = std::min(best, err);
  }
  const double var_y = (y.array() - y.mean()).square().mean();
  const double tie = 1e-10 * std::max(best, 1e-6 * var_y);
  Index chosen = 0;
  while (out.cv_table[static_cast<std::size_t>(chosen)].cv_error > best + tie) ++chosen;
  out.lambda = grid[static_cast<std::size_t>(chosen)];
  out.out_of_fold = predictions.col(chosen);
  return out;
}

PenalizedFit fit_lasso_cv(const MatrixXd& X, const VectorXd& y, const DesignSpec& spec, const CvConfig& config,
                          VectorXd* out_of_fold) {
  const std::vector<double> grid =
      config.grid ? *config.grid : lambda_grid(X, y, spec, config.grid_size, config.min_ratio);
  CvSelection sel = cv_lambda(X, y, spec, grid, config.folds, config.seed, config.solver);
  LassoProblem problem(X, y, spec, config.solver);
  std::size_t sweeps = 0;
  for (double lambda : grid) {
    sweeps += problem.solve(lambda);
    if (lambda == sel.lambda) break;
  }
  PenalizedFit fit = make_fit(problem, X, y, sel.lambda, sweeps);
  fit.cv_table = std::move(sel.cv_table);
  if (out_of_fold) *out_of_fold = std::move(sel.out_of_fold);
  return fit;
}

double kkt_violation(const MatrixXd& X, const VectorXd& y, const DesignSpec& spec, const PenalizedFit& fit) {
  const double n = static_cast<double>(X.rows());
  const VectorXd grad = X.transpose() * (y - X * fit.coefficients) / n;
  double worst = 0.0;
  for (std::size_t c : spec.unpenalized_cols) worst = std::max(worst, std::abs(grad(static_cast<Index>(c))));
  for (std::size_t c : spec.penalized_cols) {
    const auto ci = static_cast<Index>(c);
    double s = 1.0;
    if (spec.standardize_penalized) {
      const double mean = X.col(ci).mean();
      s = std::sqrt((X.col(ci).array() - mean).square().mean());
    }
    const double b = fit.coefficients(ci);
    const double v = b != 0.0 ? std::abs(grad(ci) - fit.lambda * s * (b > 0 ? 1.0 : -1.0))
                              : std::max(0.0, std::abs(grad(ci)) - fit.lambda * s);
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace spatialdr
