#include "spatialdr/design.hpp"

#include "spatialdr/error.hpp"

namespace spatialdr {
namespace {

Design assemble(const Dataset& dataset, const Eigen::VectorXd* treatment, const std::string& treatment_name,
                const Eigen::MatrixXd& basis) {
  const auto n = static_cast<Eigen::Index>(dataset.size());
  if (basis.cols() > 0 && basis.rows() != n) {
    throw ConfigError("basis has " + std::to_string(basis.rows()) + " rows but dataset has " + std::to_string(n));
  }
  const auto q = static_cast<Eigen::Index>(dataset.confounders().size());
  const Eigen::Index lead = treatment ? 2 : 1;
  Design d;
  d.X.resize(n, lead + q + basis.cols());
  d.X.col(0).setOnes();
  d.names.push_back("(intercept)");
  if (treatment) {
    d.X.col(1) = *treatment;
    d.names.push_back(treatment_name);
  }
  for (Eigen::Index k = 0; k < q; ++k) {
    d.X.col(lead + k) = dataset.confounders()[static_cast<std::size_t>(k)].second;
    d.names.push_back(dataset.confounders()[static_cast<std::size_t>(k)].first);
  }
  if (basis.cols() > 0) d.X.rightCols(basis.cols()) = basis;
  for (Eigen::Index k = 0; k < basis.cols(); ++k) d.names.push_back("z" + std::to_string(k + 1));
  for (Eigen::Index c = 0; c < lead + q; ++c) d.spec.unpenalized_cols.push_back(static_cast<std::size_t>(c));
  for (Eigen::Index c = lead + q; c < d.X.cols(); ++c) d.spec.penalized_cols.push_back(static_cast<std::size_t>(c));
  return d;
}

}  // namespace

Design gps_design(const Dataset& dataset, const Eigen::MatrixXd& basis) {
  return assemble(dataset, nullptr, "", basis);
}

Design outcome_design(const Dataset& dataset, const std::string& treatment_name, const Eigen::MatrixXd& basis) {
  return assemble(dataset, &dataset.treatment(treatment_name), treatment_name, basis);
}

}  // namespace spatialdr
