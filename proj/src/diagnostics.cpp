#include "spatialdr/diagnostics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "spatialdr/csv.hpp"
#include "spatialdr/data_model.hpp"
#include "spatialdr/design.hpp"
#include "spatialdr/error.hpp"
#include "spatialdr/rng.hpp"

namespace spatialdr {
namespace {

double cross_product(const Eigen::VectorXd& e, const AdjacencyGraph& graph) {
  double sum = 0.0;
  for (auto [i, j] : graph.edges()) sum += e(static_cast<Eigen::Index>(i)) * e(static_cast<Eigen::Index>(j));
  return 2.0 * sum;
}

Eigen::VectorXd centered_checked(const Eigen::VectorXd& values, const AdjacencyGraph& graph) {
  if (static_cast<std::size_t>(values.size()) != graph.size()) {
    throw ConfigError("Moran's I: " + std::to_string(values.size()) + " values for a graph of " +
                      std::to_string(graph.size()) + " nodes");
  }
  if (graph.edge_count() == 0) throw ConfigError("Moran's I is undefined on a graph without edges (S0 = 0)");
  if (!values.allFinite()) throw DataError("Moran's I: non-finite values");
  Eigen::VectorXd e = values.array() - values.mean();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  if (e.squaredNorm() <= 1e-24 * scale * scale * static_cast<double>(values.size())) {
    throw NumericalError("Moran's I is undefined for zero-variance values");
  }
  return e;
}

}  // namespace

std::string to_string(MoranMethod method) { return method == MoranMethod::Analytic ? "analytic" : "permutation"; }

MoranMethod parse_moran_method(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "analytic") return MoranMethod::Analytic;
  if (lower == "permutation") return MoranMethod::Permutation;
  throw ConfigError("unknown Moran method '" + text + "' (expected analytic or permutation)");
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double moran_statistic(const Eigen::VectorXd& values, const AdjacencyGraph& graph) {
  const Eigen::VectorXd e = centered_checked(values, graph);
  const double s0 = 2.0 * static_cast<double>(graph.edge_count());
  return static_cast<double>(graph.size()) / s0 * cross_product(e, graph) / e.squaredNorm();
}

MoranResult morans_i(const Eigen::VectorXd& values, const AdjacencyGraph& graph, const MoranOptions& options) {
  const Eigen::VectorXd e = centered_checked(values, graph);
  const double n = static_cast<double>(graph.size());
  const double s0 = 2.0 * static_cast<double>(graph.edge_count());
  const double ss = e.squaredNorm();

  MoranResult r;
  r.method = options.method;
  r.I = n / s0 * cross_product(e, graph) / ss;
  r.expected = -1.0 / (n - 1.0);

  const double s1 = 2.0 * s0;
  double s2 = 0.0;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const double d = static_cast<double>(graph.degree(i));
    s2 += 4.0 * d * d;
  }
  r.variance = (n * n * s1 - n * s2 + 3.0 * s0 * s0) / ((n * n - 1.0) * s0 * s0) - r.expected * r.expected;
  r.z = r.variance > 0.0 ? (r.I - r.expected) / std::sqrt(r.variance) : 0.0;

  if (options.method == MoranMethod::Analytic) {
    r.p_value = std::erfc(std::abs(r.z) / std::sqrt(2.0));
    return r;
  }
  if (options.permutations == 0) throw ConfigError("permutation test needs at least one permutation");
  r.permutations = options.permutations;
  const double observed = std::abs(r.I - r.expected);
  const double slack = 1e-12 * std::max(1.0, observed);
  std::size_t extreme = 0;
  Eigen::VectorXd shuffled = e;
  for (std::size_t b = 0; b < options.permutations; ++b) {
    Rng rng = Rng::derive(options.seed, b);
    shuffled = e;
    rng.shuffle(std::span<double>(shuffled.data(), static_cast<std::size_t>(shuffled.size())));
    const double ib = n / s0 * cross_product(shuffled, graph) / ss;
    if (std::abs(ib - r.expected) >= observed - slack) ++extreme;
  }
  r.p_value = static_cast<double>(extreme + 1) / static_cast<double>(options.permutations + 1);
  return r;
}

FitMetrics fit_metrics(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat, std::size_t active_bases) {
  if (y.size() != y_hat.size()) throw ConfigError("fit_metrics: length mismatch");
  if (y.size() == 0) throw ConfigError("fit_metrics: empty input");
  const Eigen::ArrayXd resid = (y - y_hat).array();
  const double sst = (y.array() - y.mean()).square().sum();
  if (!(sst > 0.0)) throw DataError("R^2 is undefined for a zero-variance response");
  FitMetrics m;
  m.rmse = std::sqrt(resid.square().mean());
  m.mae = resid.abs().mean();
  m.r2 = 1.0 - resid.square().sum() / sst;
  m.active_bases = active_bases;
  return m;
}

FitMetrics fit_metrics(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat, const PenalizedFit& fit) {
  return fit_metrics(y, y_hat, fit.active_count);
}

SweepReport basis_sweep(const Dataset& dataset, const std::string& treatment_name, const AdjacencyGraph& graph,
                        const SpectralDecomposition& decomposition, const std::vector<std::size_t>& K_grid,
                        const SweepConfig& config) {
  if (graph.size() != dataset.size()) throw ConfigError("graph and dataset sizes differ");
  const Eigen::VectorXd& y = dataset.outcome();
  auto provider = [&](std::size_t K) {
    const BasisMatrix basis = decomposition.leading(K);
    const Design design = outcome_design(dataset, treatment_name, basis.Z);
    Eigen::VectorXd oof;
    const PenalizedFit fit = fit_lasso_cv(design.X, y, design.spec, config.cv, &oof);
    const FitMetrics m = fit_metrics(y, oof, fit);
    return CandidateEvaluation{y - oof, m.rmse, m.mae, m.r2, m.active_bases};
  };
  SweepReport report;
  report.family = decomposition.family();
  report.selection = select_K(K_grid, provider, graph, config.alpha, decomposition.family(), config.moran);
  return report;
}

SweepReport basis_sweep(const Dataset& dataset, const std::string& treatment_name, const AdjacencyGraph& graph,
                        BasisFamily family, const std::vector<std::size_t>& K_grid, const SweepConfig& config) {
  const SpectralDecomposition decomposition =
      family == BasisFamily::Mem ? mem_decomposition(graph) : icar_decomposition(graph, config.precision);
  return basis_sweep(dataset, treatment_name, graph, decomposition, K_grid, config);
}

std::string sweep_csv(const std::vector<SweepReport>& reports) {
  std::string out = "K,family,rmse,mae,r2,active_bases,moran_p\n";
  for (const auto& report : reports) {
    for (const auto& row : report.selection.rows) {
      out += std::to_string(row.K) + "," + to_string(row.family) + "," + csv::format_double(row.rmse) + "," +
             csv::format_double(row.mae) + "," + csv::format_double(row.r2) + "," +
             std::to_string(row.active_bases) + "," + csv::format_double(row.moran_p) + "\n";
    }
  }
  return out;
}

}  // namespace spatialdr
