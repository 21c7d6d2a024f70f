#include "spatialdr/dr_estimator.hpp"

#include <cmath>

#include "spatialdr/design.hpp"
#include "spatialdr/error.hpp"
#include "spatialdr/parallel.hpp"
#include "spatialdr/rng.hpp"

namespace spatialdr {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd rows_of(const MatrixXd& X, const std::vector<std::size_t>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = X.row(static_cast<Index>(rows[r]));
  return out;
}

VectorXd rows_of(const VectorXd& v, const std::vector<std::size_t>& rows) {
  VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = v(static_cast<Index>(rows[r]));
  return out;
}

// Lasso with CV when there is anything to penalize, plain least squares otherwise.
PenalizedFit fit_nuisance(const MatrixXd& X, const VectorXd& y, const DesignSpec& spec, const CvConfig& cv) {
  if (spec.penalized_cols.empty()) return fit_lasso(X, y, spec, 0.0, cv.solver);
  return fit_lasso_cv(X, y, spec, cv);
}

CvConfig seeded(const CvConfig& base, std::uint64_t seed, std::uint64_t stream) {
  CvConfig cv = base;
  cv.seed = Rng::splitmix64(seed ^ Rng::splitmix64(stream));
  return cv;
}

constexpr std::uint64_t kFullGpsStream = 1000001;
constexpr std::uint64_t kFullOutcomeStream = 1000002;

}  // namespace

std::vector<std::size_t> CrossFitPlan::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (assignment[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> CrossFitPlan::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (assignment[i] != fold) out.push_back(i);
  }
  return out;
}

CrossFitPlan make_plan(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-fitting needs at least 2 folds");
  if (folds > n) {
    throw ConfigError("cross-fitting folds (" + std::to_string(folds) + ") exceed units (" + std::to_string(n) + ")");
  }
  return CrossFitPlan{n, folds, seed, balanced_folds(n, folds, seed)};
}

CrossFitResult crossfit_nuisances(const Dataset& dataset, const std::string& treatment_name, const MatrixXd& Z,
                                  const CrossFitPlan& plan, const EstimatorConfig& config) {
  if (plan.n != dataset.size()) throw ConfigError("cross-fit plan size does not match dataset");
  const VectorXd& a = dataset.treatment(treatment_name);
  const VectorXd& y = dataset.outcome();
  const MatrixXd none(static_cast<Index>(dataset.size()), 0);
  const Design gps = gps_design(dataset, config.basis_in_gps ? Z : none);
  const Design outcome = outcome_design(dataset, treatment_name, config.basis_in_outcome ? Z : none);

  CrossFitResult result;
  result.mu_hat = VectorXd::Zero(a.size());
  result.g_hat = VectorXd::Zero(a.size());
  result.folds.resize(plan.folds);

  parallel_for(plan.folds, config.threads, [&](std::size_t k) {
    try {
      const auto train = plan.complement(k);
      const auto test = plan.members(k);
      const PenalizedFit gps_fit =
          fit_nuisance(rows_of(gps.X, train), rows_of(a, train), gps.spec, seeded(config.cv, config.seed, 2 * k));
      const PenalizedFit out_fit = fit_nuisance(rows_of(outcome.X, train), rows_of(y, train), outcome.spec,
                                                seeded(config.cv, config.seed, 2 * k + 1));
      const VectorXd mu = rows_of(gps.X, test) * gps_fit.coefficients;
      const VectorXd g = rows_of(outcome.X, test) * out_fit.coefficients;
      for (std::size_t r = 0; r < test.size(); ++r) {
        result.mu_hat(static_cast<Index>(test[r])) = mu(static_cast<Index>(r));
        result.g_hat(static_cast<Index>(test[r])) = g(static_cast<Index>(r));
      }
      FoldRecord& rec = result.folds[k];
      rec.fold = k;
      rec.lambda_gps = gps_fit.lambda;
      rec.lambda_outcome = out_fit.lambda;
      rec.active_gps = gps_fit.active_count;
      rec.active_outcome = out_fit.active_count;
      rec.beta_outcome = out_fit.coefficients(static_cast<Index>(kOutcomeTreatmentColumn));
      rec.training_rows = train;
    } catch (const Error& e) {
      throw Error(e.kind(), "cross-fitting fold " + std::to_string(k) + ": " + e.what());
    }
  });
  return result;
}

DrResult dr_estimate(const VectorXd& treatment, const VectorXd& outcome, const VectorXd& mu_hat, const VectorXd& g_hat,
                     const VectorXd& weights, double beta_hat) {
  const Index n = treatment.size();
  if (outcome.size() != n || mu_hat.size() != n || g_hat.size() != n || weights.size() != n) {
    throw ConfigError("dr_estimate: input lengths differ");
  }
  if (n < 2) throw ConfigError("dr_estimate needs at least 2 units");
  const double nd = static_cast<double>(n);
  const VectorXd resid_a = treatment - mu_hat;
  const VectorXd resid_y = outcome - g_hat;
  const double denominator = resid_a.dot(treatment) / nd;
  const double var_a = (treatment.array() - treatment.mean()).square().mean();
  if (!(std::abs(denominator) >= 1e-12 * var_a) || var_a == 0.0) {
    throw NumericalError("DR denominator mean((A - mu) A) = " + std::to_string(denominator) +
                         " is near zero; the treatment model nearly interpolates the treatment");
  }
  const VectorXd score = weights.cwiseProduct(resid_a).cwiseProduct(resid_y);

  DrResult r;
  r.n = static_cast<std::size_t>(n);
  r.beta_hat = beta_hat;
  r.denominator = denominator;
  r.correction = score.sum() / nd / denominator;
  r.tau_hat = beta_hat + r.correction;
  r.influence = (score + resid_a.cwiseProduct(treatment) * (beta_hat - r.tau_hat)) / denominator;
  r.se = std::sqrt(r.influence.squaredNorm()) / nd;
  r.ci_low = r.tau_hat - kNormalQuantile975 * r.se;
  r.ci_high = r.tau_hat + kNormalQuantile975 * r.se;
  return r;
}

DrResult dr_estimate(const Dataset& dataset, const std::string& treatment_name, const VectorXd& mu_hat,
                     const VectorXd& g_hat, const WeightVector& weights, double beta_hat) {
  DrResult r = dr_estimate(dataset.treatment(treatment_name), dataset.outcome(), mu_hat, g_hat, weights.w, beta_hat);
  r.treatment_name = treatment_name;
  return r;
}

DrResult run_treatment(const Dataset& dataset, const std::string& treatment_name, const MatrixXd& Z,
                       const AdjacencyGraph& graph, const EstimatorConfig& config) {
  const VectorXd& a = dataset.treatment(treatment_name);
  const VectorXd& y = dataset.outcome();
  if (graph.size() != dataset.size()) throw ConfigError("graph and dataset sizes differ");
  if (Z.cols() > 0 && Z.rows() != static_cast<Index>(dataset.size())) {
    throw ConfigError("basis rows do not match dataset size");
  }

  const CrossFitPlan plan = make_plan(dataset.size(), config.folds, config.seed);
  CrossFitResult cf = crossfit_nuisances(dataset, treatment_name, Z, plan, config);

  const MatrixXd none(static_cast<Index>(dataset.size()), 0);
  const GpsModel gps = fit_gps(dataset, treatment_name, config.basis_in_gps ? Z : none,
                               seeded(config.cv, config.seed, kFullGpsStream), config.marginal);
  const WeightVector weights = stabilized_weights(gps, a, config.truncation);

  const Design outcome = outcome_design(dataset, treatment_name, config.basis_in_outcome ? Z : none);
  const PenalizedFit full =
      fit_nuisance(outcome.X, y, outcome.spec, seeded(config.cv, config.seed, kFullOutcomeStream));
  const double beta_hat = full.coefficients(static_cast<Index>(kOutcomeTreatmentColumn));

  DrResult r = dr_estimate(a, y, cf.mu_hat, cf.g_hat, weights.w, beta_hat);
  r.treatment_name = treatment_name;
  r.K = static_cast<std::size_t>(Z.cols());
  r.marginal = config.marginal;
  r.weight_summary = {weights.min(), weights.mean(), weights.max()};
  r.truncation_bounds = weights.truncation_bounds;
  r.fold_records = std::move(cf.folds);
  r.lambda_outcome_full = full.lambda;
  r.active_outcome_full = full.active_count;
  r.lambda_gps_full = gps.mean_fit.lambda;
  r.active_gps_full = gps.mean_fit.active_count;
  r.gps_sigma2 = gps.sigma2;
  r.outcome_residual_variance = full.residual_variance;
  for (std::size_t k = 0; k < dataset.confounders().size(); ++k) {
    r.confounder_coefficients.emplace_back(dataset.confounders()[k].first,
                                           full.coefficients(static_cast<Index>(kOutcomeTreatmentColumn + 1 + k)));
  }
  r.balance = balance_table(dataset, treatment_name, weights, Z);
  if (graph.edge_count() > 0) r.moran = morans_i(y - cf.g_hat, graph, config.moran);
  return r;
}

}  // namespace spatialdr
