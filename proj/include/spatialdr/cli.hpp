#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spatialdr/data_model.hpp"
#include "spatialdr/dr_estimator.hpp"
#include "spatialdr/spectral_basis.hpp"
#include "spatialdr/synthetic.hpp"

namespace spatialdr::cli {

inline constexpr const char* kSoftwareName = "spatialdr";
inline constexpr const char* kSoftwareVersion = "0.1.0";

/// Exit codes: 0 success, 1 unexpected internal failure, 2 configuration or
/// usage error, 3 data error, 4 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

struct RunConfig {
  std::filesystem::path data_path;
  std::filesystem::path edge_list_path;
  ColumnSpec columns{"id", "y", {}, {}};
  BasisFamily family = BasisFamily::Icar;
  std::size_t K = 350;
  std::vector<std::size_t> K_grid;
  std::vector<BasisFamily> sweep_families{BasisFamily::Mem, BasisFamily::Icar};
  std::string sweep_treatment;  // empty: first treatment
  std::size_t folds = 10;
  std::size_t cv_folds = 10;
  std::uint64_t seed = 1;
  std::size_t lambda_grid_size = 100;
  double lambda_min_ratio = 1e-4;
  MarginalDensity marginal = MarginalDensity::Normal;
  std::optional<Truncation> truncation;
  double alpha = 0.05;
  double rho = 1.0;
  MoranMethod moran_method = MoranMethod::Analytic;
  std::size_t permutations = 999;
  bool basis_in_gps = true;
  bool basis_in_outcome = true;
  std::filesystem::path out_dir = "out";
  std::size_t threads = 1;

  /// Throws ConfigError for out-of-range values.
  void validate() const;
};

/// Applies keys of a JSON config document onto `config`. Unknown keys are
/// rejected. Keys match the long flag names with dashes replaced by
/// underscores, e.g. "lambda_min_ratio".
void apply_config_json(RunConfig& config, const std::string& json_text);

/// Canonical JSON of the fields that affect results (not threads or out_dir).
std::string semantic_config_json(const RunConfig& config);

/// 16 hex digits of FNV-1a 64 over semantic_config_json.
std::string config_hash(const RunConfig& config);

EstimatorConfig estimator_config(const RunConfig& config);

struct LoadedInputs {
  Dataset dataset;
  AdjacencyGraph graph;  // aligned to dataset rows
};

/// Reads the data CSV and edge list. Edge ids absent from the data are
/// dropped; data units without edges stay as isolated nodes.
LoadedInputs load_inputs(const RunConfig& config);

/// Results document with a metadata block; `timestamp` empty omits the field.
std::string results_json(const std::vector<DrResult>& results, const RunConfig& config, const std::string& timestamp);

std::string influence_csv(const DrResult& result, const std::vector<std::string>& unit_ids);

/// Sweep rows plus the selected K for each family.
std::string sweep_json(const std::vector<SweepReport>& reports, const RunConfig& config);

/// Entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spatialdr::cli
