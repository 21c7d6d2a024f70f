#include "spatialdr/gps.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "spatialdr/csv.hpp"
#include "spatialdr/design.hpp"
#include "spatialdr/error.hpp"

namespace spatialdr {
namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))
constexpr double kDensityFloor = 1e-300;

double log_sum_exp(const Eigen::ArrayXd& x) {
  const double m = x.maxCoeff();
  return m + std::log((x - m).exp().sum());
}

}  // namespace

std::string to_string(MarginalDensity mode) { return mode == MarginalDensity::Normal ? "normal" : "kde"; }

MarginalDensity parse_marginal_density(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "normal") return MarginalDensity::Normal;
  if (lower == "kde") return MarginalDensity::Kde;
  throw ConfigError("unknown marginal density '" + text + "' (expected normal or kde)");
}

double gps_log_density(double a, double mu, double sigma2) {
  if (!(sigma2 > 0.0)) throw NumericalError("GPS variance must be positive");
  const double d = a - mu;
  return -d * d / (2.0 * sigma2) - 0.5 * std::log(sigma2) - kLogSqrt2Pi;
}

double gps_density(double a, double mu, double sigma2) { return std::exp(gps_log_density(a, mu, sigma2)); }

double gps_density(const GpsModel& model, double a, double mu) { return gps_density(a, mu, model.sigma2); }

double GpsModel::log_marginal_density(double a) const {
  if (marginal == MarginalDensity::Normal) return gps_log_density(a, marginal_mean, marginal_var);
  const Eigen::ArrayXd z = (a - treatment_sample.array()) / kde_bandwidth;
  const Eigen::ArrayXd terms = -0.5 * z.square();
  return log_sum_exp(terms) - std::log(static_cast<double>(treatment_sample.size()) * kde_bandwidth) - kLogSqrt2Pi;
}

GpsModel fit_gps(const Dataset& dataset, const std::string& treatment_name, const Eigen::MatrixXd& Z,
                 const CvConfig& cv, MarginalDensity marginal) {
  const Eigen::VectorXd& a = dataset.treatment(treatment_name);
  const double n = static_cast<double>(a.size());
  GpsModel model;
  model.marginal = marginal;
  model.marginal_mean = a.mean();
  model.marginal_var = (a.array() - model.marginal_mean).square().mean();
  const double magnitude = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (model.marginal_var <= 1e-24 * magnitude * magnitude) {
    throw NumericalError("treatment '" + treatment_name + "' has zero variance (degenerate treatment)");
  }

  const Design design = gps_design(dataset, Z);
  model.mean_fit = design.spec.penalized_cols.empty() ? fit_lasso(design.X, a, design.spec, 0.0, cv.solver)
                                                      : fit_lasso_cv(design.X, a, design.spec, cv);
  model.fitted_mean = design.X * model.mean_fit.coefficients;
  model.sigma2 = model.mean_fit.residual_variance;

  if (marginal == MarginalDensity::Kde) {
    model.treatment_sample = a;
    const double sd = std::sqrt(model.marginal_var * n / std::max(n - 1.0, 1.0));
    const double iqr = quantile(a, 0.75) - quantile(a, 0.25);
    double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    model.kde_bandwidth = 0.9 * spread * std::pow(n, -0.2);
  }
  return model;
}

double quantile(Eigen::VectorXd values, double p) {
  if (values.size() == 0) throw ConfigError("quantile of empty vector");
  std::sort(values.data(), values.data() + values.size());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(h));
  const auto hi = std::min<Eigen::Index>(lo + 1, values.size() - 1);
  return values(lo) + (h - static_cast<double>(lo)) * (values(hi) - values(lo));
}

WeightVector stabilized_weights(const GpsModel& model, const Eigen::VectorXd& treatment,
                                const std::optional<Truncation>& truncation) {
  if (treatment.size() != model.fitted_mean.size()) throw ConfigError("treatment and GPS fit lengths differ");
  if (!(model.sigma2 > 0.0)) {
    throw NumericalError("GPS residual variance is zero: the treatment is a deterministic function of the covariates");
  }
  WeightVector out;
  out.w.resize(treatment.size());
  for (Eigen::Index j = 0; j < treatment.size(); ++j) {
    const double log_conditional = gps_log_density(treatment(j), model.fitted_mean(j), model.sigma2);
    if (!truncation && log_conditional < std::log(kDensityFloor)) {
      throw NumericalError("conditional treatment density underflows for unit " + std::to_string(j) +
                           "; extreme weight, consider enabling weight truncation");
    }
    out.w(j) = std::exp(model.log_marginal_density(treatment(j)) - log_conditional);
  }
  if (truncation) {
    if (!(truncation->lower_percentile >= 0.0 && truncation->lower_percentile < truncation->upper_percentile &&
          truncation->upper_percentile <= 100.0)) {
      throw ConfigError("truncation percentiles must satisfy 0 <= lower < upper <= 100");
    }
    // Infinite weights from extreme tails are clamped like any other.
    Eigen::VectorXd finite = out.w.unaryExpr([](double v) { return std::isfinite(v) ? v : 1e300; });
    const double lo = quantile(finite, truncation->lower_percentile / 100.0);
    const double hi = quantile(finite, truncation->upper_percentile / 100.0);
    out.w = finite.cwiseMax(lo).cwiseMin(hi);
    out.truncation_bounds = std::make_pair(lo, hi);
  }
  if (!out.w.allFinite() || (out.w.array() <= 0.0).any()) {
    throw NumericalError("stabilized weights are not all positive and finite; consider enabling weight truncation");
  }
  return out;
}

WeightVector stabilized_weights(const GpsModel& model, const Dataset& dataset, const std::string& treatment_name,
                                const std::optional<Truncation>& truncation) {
  return stabilized_weights(model, dataset.treatment(treatment_name), truncation);
}

double pearson_correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return weighted_correlation(x, y, Eigen::VectorXd::Ones(x.size()));
}

double weighted_correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  if (x.size() != y.size() || x.size() != w.size()) throw ConfigError("correlation: length mismatch");
  const double sw = w.sum();
  if (!(sw > 0.0)) throw ConfigError("correlation: weights must have positive sum");
  const double mx = w.dot(x) / sw;
  const double my = w.dot(y) / sw;
  const Eigen::ArrayXd dx = x.array() - mx;
  const Eigen::ArrayXd dy = y.array() - my;
  const double cxy = (w.array() * dx * dy).sum() / sw;
  const double cxx = (w.array() * dx * dx).sum() / sw;
  const double cyy = (w.array() * dy * dy).sum() / sw;
  if (!(cxx > 0.0 && cyy > 0.0)) return 0.0;
  return cxy / std::sqrt(cxx * cyy);
}

std::vector<BalanceRow> balance_table(const Dataset& dataset, const std::string& treatment_name,
                                      const WeightVector& weights, const Eigen::MatrixXd& basis) {
  const Eigen::VectorXd& a = dataset.treatment(treatment_name);
  if ((weights.w.array() <= 0.0).any()) throw ConfigError("balance weights must be positive");
  std::vector<BalanceRow> rows;
  for (const auto& [name, x] : dataset.confounders()) {
    rows.push_back({name, pearson_correlation(a, x), weighted_correlation(a, x, weights.w)});
  }
  if (basis.cols() > 0) {
    double raw = 0.0, weighted = 0.0;
    for (Eigen::Index k = 0; k < basis.cols(); ++k) {
      const Eigen::VectorXd z = basis.col(k);
      raw += std::abs(pearson_correlation(a, z));
      weighted += std::abs(weighted_correlation(a, z, weights.w));
    }
    const double K = static_cast<double>(basis.cols());
    rows.push_back({"basis_mean_abs", raw / K, weighted / K});
  }
  return rows;
}

std::string balance_csv(const std::vector<BalanceRow>& rows) {
  std::string out = "confounder,rho_unweighted,rho_weighted\n";
  for (const auto& r : rows) {
    out += csv::escape(r.covariate) + "," + csv::format_double(r.rho_unweighted) + "," +
           csv::format_double(r.rho_weighted) + "\n";
  }
  return out;
}

}  // namespace spatialdr
