#include "spatialdr/synthetic.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include "json.hpp"

#include "spatialdr/csv.hpp"
#include "spatialdr/error.hpp"
#include "spatialdr/rng.hpp"

namespace spatialdr::synthetic {
namespace {

using Eigen::Index;
using Eigen::VectorXd;

std::vector<std::string> lattice_ids(std::size_t n) {
  const std::size_t width = std::to_string(n).size();
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string digits = std::to_string(i + 1);
    ids[i] = "u" + std::string(width - digits.size(), '0') + digits;
  }
  return ids;
}

VectorXd normal_vector(Rng& rng, std::size_t size, double sd) {
  VectorXd v(static_cast<Index>(size));
  for (Index i = 0; i < v.size(); ++i) v(i) = sd * rng.normal();
  return v;
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void DgpSpec::validate() const {
  if (grid_side < 2) throw ConfigError("grid side must be at least 2");
  const std::size_t n = grid_side * grid_side;
  if (spatial_rank < 1 || spatial_rank >= n - 1) {
    throw ConfigError("spatial rank must be in [1, " + std::to_string(n - 2) + "] for a " +
                      std::to_string(grid_side) + "x" + std::to_string(grid_side) + " lattice");
  }
  if (!(noise_sd_treatment > 0.0) || !(noise_sd_outcome > 0.0)) throw ConfigError("noise sds must be positive");
  if (latent_sd && !(*latent_sd > 0.0)) throw ConfigError("latent sd must be positive");
  if (treatment_confounder_scale < 0.0 || outcome_confounder_scale < 0.0) {
    throw ConfigError("confounder effect scales must be non-negative");
  }
  for (double v : {tau, confounding_strength, treatment_confounder_scale, outcome_confounder_scale}) {
    if (!std::isfinite(v)) throw ConfigError("DGP parameters must be finite");
  }
}

ColumnSpec column_spec(std::size_t confounder_count) {
  ColumnSpec spec{kIdColumn, kOutcomeColumn, {kTreatmentColumn}, {}};
  for (std::size_t k = 0; k < confounder_count; ++k) spec.confounder_cols.push_back("x" + std::to_string(k + 1));
  return spec;
}

const SpectralDecomposition& lattice_decomposition(std::size_t grid_side) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<SpectralDecomposition>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[grid_side];
  if (!slot) slot = std::make_unique<SpectralDecomposition>(icar_decomposition(rook_lattice(grid_side, grid_side)));
  return *slot;
}

Sample generate(const DgpSpec& spec) {
  spec.validate();
  const std::size_t n = spec.grid_side * spec.grid_side;
  const Index nn = static_cast<Index>(n);
  AdjacencyGraph graph = rook_lattice(spec.grid_side, spec.grid_side);
  const Eigen::MatrixXd& vectors = lattice_decomposition(spec.grid_side).vectors();

  Rng rng(spec.seed);
  Truth truth;
  truth.tau = spec.tau;
  truth.delta = spec.confounding_strength;
  truth.alpha = normal_vector(rng, spec.spatial_rank, 1.0);
  truth.u = vectors.leftCols(static_cast<Index>(spec.spatial_rank)) * truth.alpha;
  if (spec.latent_sd) {
    const double sd = std::sqrt((truth.u.array() - truth.u.mean()).square().mean());
    truth.alpha *= *spec.latent_sd / sd;
    truth.u *= *spec.latent_sd / sd;
  }
  truth.gamma0 = normal_vector(rng, spec.confounder_count, spec.treatment_confounder_scale);
  truth.gamma1 = normal_vector(rng, spec.confounder_count, spec.outcome_confounder_scale);

  Eigen::MatrixXd X(nn, static_cast<Index>(spec.confounder_count));
  for (Index j = 0; j < X.cols(); ++j) X.col(j) = normal_vector(rng, n, 1.0);
  const VectorXd a = X * truth.gamma0 + spec.confounding_strength * truth.u + normal_vector(rng, n, spec.noise_sd_treatment);
  const VectorXd y = spec.tau * a + X * truth.gamma1 + truth.u + normal_vector(rng, n, spec.noise_sd_outcome);

  const ColumnSpec columns = column_spec(spec.confounder_count);
  std::vector<NamedColumn> confounders;
  for (Index j = 0; j < X.cols(); ++j) confounders.emplace_back(columns.confounder_cols[static_cast<std::size_t>(j)], X.col(j));
  Dataset dataset(lattice_ids(n), y, {{kTreatmentColumn, a}}, std::move(confounders));
  return Sample{std::move(dataset), std::move(graph), std::move(truth)};
}

std::string truth_json(const Sample& sample, const DgpSpec& spec) {
  nlohmann::ordered_json j;
  j["tau"] = spec.tau;
  j["generator"] = {
      {"grid_side", spec.grid_side},
      {"confounder_count", spec.confounder_count},
      {"spatial_rank", spec.spatial_rank},
      {"confounding_strength", spec.confounding_strength},
      {"noise_sd_treatment", spec.noise_sd_treatment},
      {"noise_sd_outcome", spec.noise_sd_outcome},
      {"latent_sd", spec.latent_sd ? nlohmann::ordered_json(*spec.latent_sd) : nlohmann::ordered_json(nullptr)},
      {"treatment_confounder_scale", spec.treatment_confounder_scale},
      {"outcome_confounder_scale", spec.outcome_confounder_scale},
      {"seed", spec.seed},
      {"rng", Rng::kAlgorithm},
  };
  j["gamma0"] = to_std(sample.truth.gamma0);
  j["gamma1"] = to_std(sample.truth.gamma1);
  j["alpha"] = to_std(sample.truth.alpha);
  j["units"] = sample.dataset.size();
  j["edges"] = sample.graph.edge_count();
  return j.dump(2) + "\n";
}

void write_sample(const std::filesystem::path& directory, const Sample& sample, const DgpSpec& spec) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw DataError("cannot create output directory " + directory.string() + ": " + ec.message());
  write_dataset(directory / "data.csv", sample.dataset, column_spec(spec.confounder_count));
  write_edge_list(directory / "edges.csv", sample.graph, sample.dataset.unit_ids());
  csv::write_atomic(directory / "truth.json", truth_json(sample, spec));
}

}  // namespace spatialdr::synthetic
