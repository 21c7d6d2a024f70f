#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "spatialdr/data_model.hpp"
#include "spatialdr/graph.hpp"
#include "spatialdr/spectral_basis.hpp"

namespace spatialdr::synthetic {

/// Partially linear DGP on an m x m rook lattice:
///   u = Z_r alpha (the r smoothest ICAR eigenvectors, alpha ~ N(0, I)),
///   A = X gamma0 + delta u + noise_A,
///   y = tau A + X gamma1 + u + noise_y,
/// with X iid standard normal, gamma0 ~ N(0, s0^2), gamma1 ~ N(0, s1^2).
/// When latent_sd is set, u is rescaled to that sample standard deviation.
struct DgpSpec {
  std::size_t grid_side = 30;
  double tau = 1.0;
  std::size_t confounder_count = 3;
  std::size_t spatial_rank = 5;
  double confounding_strength = 5.0;
  double noise_sd_treatment = 1.0;
  double noise_sd_outcome = 0.06;
  std::optional<double> latent_sd = 0.06;
  double treatment_confounder_scale = 0.3;
  double outcome_confounder_scale = 0.5;
  std::uint64_t seed = 1;

  /// Throws ConfigError: grid_side >= 2, 1 <= spatial_rank < m^2 - 1, sds > 0.
  void validate() const;
};

struct Truth {
  double tau = 0.0;
  double delta = 0.0;
  Eigen::VectorXd gamma0;
  Eigen::VectorXd gamma1;
  Eigen::VectorXd alpha;
  Eigen::VectorXd u;
};

struct Sample {
  Dataset dataset;
  AdjacencyGraph graph;
  Truth truth;
};

inline constexpr const char* kIdColumn = "id";
inline constexpr const char* kOutcomeColumn = "y";
inline constexpr const char* kTreatmentColumn = "A";

/// Column names of generated data: id, y, A, x1..xq.
ColumnSpec column_spec(std::size_t confounder_count);

/// ICAR decomposition of the m x m lattice, computed once per m and shared.
const SpectralDecomposition& lattice_decomposition(std::size_t grid_side);

Sample generate(const DgpSpec& spec);

/// Writes data.csv, edges.csv and truth.json into `directory`.
void write_sample(const std::filesystem::path& directory, const Sample& sample, const DgpSpec& spec);

std::string truth_json(const Sample& sample, const DgpSpec& spec);

}  // namespace spatialdr::synthetic
