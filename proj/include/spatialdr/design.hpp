#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "spatialdr/data_model.hpp"
#include "spatialdr/penalized_regression.hpp"

namespace spatialdr {

/// A regression design with named columns and its penalty partition.
struct Design {
  Eigen::MatrixXd X;
  DesignSpec spec;
  std::vector<std::string> names;
};

/// Treatment mean model: [1, confounders] unpenalized, basis columns penalized.
/// Pass an empty basis (0 columns) to fit without spatial adjustment.
Design gps_design(const Dataset& dataset, const Eigen::MatrixXd& basis);

/// Outcome model: [1, treatment, confounders] unpenalized, basis penalized.
/// The treatment is always column 1.
Design outcome_design(const Dataset& dataset, const std::string& treatment_name, const Eigen::MatrixXd& basis);

inline constexpr std::size_t kOutcomeTreatmentColumn = 1;

}  // namespace spatialdr
