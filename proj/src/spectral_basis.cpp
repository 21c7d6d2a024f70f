#include "spatialdr/spectral_basis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "spatialdr/csv.hpp"
#include "spatialdr/diagnostics.hpp"
#include "spatialdr/error.hpp"
#include "spatialdr/log.hpp"

namespace spatialdr {
namespace {

using Eigen::Index;

constexpr double kClusterGap = 1e-10;
constexpr double kEntryTol = 1e-8;

void normalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Index arg = 0;
  double best = -1.0;
  for (Index i = 0; i < v.size(); ++i) {
    // Strictly greater by a margin so near-equal magnitudes resolve to the first index.
    if (std::abs(v(i)) > best + kEntryTol) {
      best = std::abs(v(i));
      arg = i;
    }
  }
  if (v(arg) < 0.0) v = -v;
}

Index first_significant(const Eigen::VectorXd& v) {
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > kEntryTol) return i;
  }
  return v.size();
}

// Orders eigenpairs (descending when `descending`), fixes signs, and orders
// vectors inside near-degenerate clusters by their first significant entry.
SpectralDecomposition canonical(BasisFamily family, const Eigen::MatrixXd& vectors, const Eigen::VectorXd& values,
                                std::vector<Index> keep, bool descending) {
  std::stable_sort(keep.begin(), keep.end(), [&](Index a, Index b) {
    return descending ? values(a) > values(b) : values(a) < values(b);
  });
  const auto k = static_cast<Index>(keep.size());
  Eigen::MatrixXd v(vectors.rows(), k);
  Eigen::VectorXd lambda(k);
  for (Index j = 0; j < k; ++j) {
    v.col(j) = vectors.col(keep[static_cast<std::size_t>(j)]);
    lambda(j) = values(keep[static_cast<std::size_t>(j)]);
    normalize_sign(v.col(j));
  }
  Index start = 0;
  while (start < k) {
    Index end = start + 1;
    while (end < k && std::abs(lambda(end) - lambda(end - 1)) < kClusterGap) ++end;
    if (end - start > 1) {
      std::vector<Index> order(static_cast<std::size_t>(end - start));
      std::iota(order.begin(), order.end(), start);
      std::vector<Index> key(order.size());
      for (std::size_t i = 0; i < order.size(); ++i) key[i] = first_significant(v.col(order[i]));
      std::vector<std::size_t> perm(order.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
      Eigen::MatrixXd block = v.middleCols(start, end - start);
      Eigen::VectorXd vals = lambda.segment(start, end - start);
      for (std::size_t i = 0; i < perm.size(); ++i) {
        v.col(start + static_cast<Index>(i)) = block.col(static_cast<Index>(perm[i]));
        lambda(start + static_cast<Index>(i)) = vals(static_cast<Index>(perm[i]));
      }
    }
    start = end;
  }
  return SpectralDecomposition(family, std::move(v), std::move(lambda));
}

}  // namespace

std::string to_string(BasisFamily family) { return family == BasisFamily::Mem ? "MEM" : "ICAR"; }

BasisFamily parse_basis_family(const std::string& text) {
  std::string upper = text;
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "MEM") return BasisFamily::Mem;
  if (upper == "ICAR") return BasisFamily::Icar;
  throw ConfigError("unknown basis family '" + text + "' (expected MEM or ICAR)");
}

SpectralDecomposition::SpectralDecomposition(BasisFamily family, Eigen::MatrixXd vectors, Eigen::VectorXd values)
    : family_(family), vectors_(std::move(vectors)), values_(std::move(values)) {}

BasisMatrix SpectralDecomposition::leading(std::size_t K) const {
  if (K < 1 || K > max_K()) {
    throw ConfigError(to_string(family_) + " basis dimension K=" + std::to_string(K) + " out of range [1, " +
                      std::to_string(max_K()) + "]");
  }
  const auto k = static_cast<Index>(K);
  return BasisMatrix{family_, vectors_.leftCols(k), values_.head(k)};
}

SpectralDecomposition mem_decomposition(const AdjacencyGraph& graph) {
  const std::size_t n = graph.size();
  Eigen::MatrixXd centered = doubly_center(graph);
  // The constant vector is an eigenvector of the centred matrix with eigenvalue 0.
  // Shifting it below the whole spectrum lets us drop it by position.
  std::size_t max_degree = 0;
  for (std::size_t i = 0; i < n; ++i) max_degree = std::max(max_degree, graph.degree(i));
  const double shift = 2.0 * (static_cast<double>(max_degree) + 1.0);
  centered.array() -= shift / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centered);
  if (solver.info() != Eigen::Success) throw NumericalError("MEM eigendecomposition failed");
  // Eigen returns ascending values; index 0 is the shifted constant vector.
  std::vector<Index> keep;
  for (Index j = 1; j < static_cast<Index>(n); ++j) keep.push_back(j);
  return canonical(BasisFamily::Mem, solver.eigenvectors(), solver.eigenvalues(), std::move(keep), true);
}

SpectralDecomposition icar_decomposition(const AdjacencyGraph& graph, const PrecisionSpec& spec) {
  const Eigen::MatrixXd q = Eigen::MatrixXd(precision_matrix(graph, spec));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(q);
  if (solver.info() != Eigen::Success) throw NumericalError("ICAR eigendecomposition failed");
  const Eigen::VectorXd& values = solver.eigenvalues();
  const double top = values.size() ? std::max(values.maxCoeff(), 0.0) : 0.0;
  std::vector<Index> keep;
  for (Index j = 0; j < values.size(); ++j) {
    if (values(j) > 1e-8 * top) keep.push_back(j);
  }
  return canonical(BasisFamily::Icar, solver.eigenvectors(), values, std::move(keep), false);
}

BasisMatrix mem_basis(const AdjacencyGraph& graph, std::size_t K) {
  if (graph.size() < 2 || K < 1 || K > graph.size() - 1) {
    throw ConfigError("MEM basis dimension K=" + std::to_string(K) + " out of range [1, " +
                      std::to_string(graph.size() > 0 ? graph.size() - 1 : 0) + "]");
  }
  BasisMatrix basis = mem_decomposition(graph).leading(K);
  const auto non_positive = (basis.eigenvalues.array() <= 0.0).count();
  if (non_positive > 0) {
    log::warn("MEM basis retains " + std::to_string(non_positive) +
              " eigenvector(s) with non-positive eigenvalue (negative or no autocorrelation)");
  }
  return basis;
}

BasisMatrix icar_basis(const AdjacencyGraph& graph, const PrecisionSpec& spec, std::size_t K) {
  const SpectralDecomposition decomposition = icar_decomposition(graph, spec);
  if (K < 1 || K > decomposition.max_K()) {
    throw ConfigError("ICAR basis dimension K=" + std::to_string(K) + " out of range [1, " +
                      std::to_string(decomposition.max_K()) + "] (n - components = " +
                      std::to_string(decomposition.max_K()) + ")");
  }
  return decomposition.leading(K);
}

void write_basis(const std::filesystem::path& path, const BasisMatrix& basis, const std::vector<std::string>& unit_ids) {
  if (unit_ids.size() != static_cast<std::size_t>(basis.Z.rows())) throw ConfigError("unit id count does not match basis rows");
  std::string out = "id";
  for (std::size_t k = 0; k < basis.K(); ++k) out += ",z" + std::to_string(k + 1);
  out += '\n';
  for (Index i = 0; i < basis.Z.rows(); ++i) {
    out += csv::escape(unit_ids[static_cast<std::size_t>(i)]);
    for (Index k = 0; k < basis.Z.cols(); ++k) out += "," + csv::format_double(basis.Z(i, k));
    out += '\n';
  }
  csv::write_atomic(path, out);
}

KSelection select_K(const std::vector<std::size_t>& candidates,
                    const std::function<CandidateEvaluation(std::size_t)>& residual_provider,
                    const AdjacencyGraph& graph, double alpha, BasisFamily family, const MoranOptions& moran) {
  if (candidates.empty()) throw ConfigError("candidate K list is empty");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i] <= candidates[i - 1]) throw ConfigError("candidate K list must be strictly ascending");
  }
  KSelection out;
  for (std::size_t K : candidates) {
    CandidateEvaluation eval;
    try {
      eval = residual_provider(K);
    } catch (const Error& e) {
      throw Error(e.kind(), "K=" + std::to_string(K) + ": " + e.what());
    }
    const MoranResult m = morans_i(eval.residuals, graph, moran);
    out.rows.push_back(SweepRow{K, family, eval.rmse, eval.mae, eval.r2, eval.active_bases, m.I, m.p_value});
  }
  out.K = candidates.back();
  out.passed = false;
  for (const auto& row : out.rows) {
    if (row.moran_p > alpha) {
      out.K = row.K;
      out.passed = true;
      break;
    }
  }
  return out;
}

KSelection select_K(const std::vector<std::size_t>& candidates,
                    const std::function<CandidateEvaluation(std::size_t)>& residual_provider,
                    const AdjacencyGraph& graph, double alpha, BasisFamily family) {
  return select_K(candidates, residual_provider, graph, alpha, family, MoranOptions{});
}

}  // namespace spatialdr
