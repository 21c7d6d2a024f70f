#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "spatialdr/graph.hpp"

namespace spatialdr {

enum class BasisFamily { Mem, Icar };

std::string to_string(BasisFamily family);
/// Accepts "MEM"/"ICAR" in any case.
BasisFamily parse_basis_family(const std::string& text);

/// n x K matrix of orthonormal spectral basis columns.
/// MEM eigenvalues descend; ICAR eigenvalues ascend and are all nonzero.
struct BasisMatrix {
  BasisFamily family = BasisFamily::Icar;
  Eigen::MatrixXd Z;
  Eigen::VectorXd eigenvalues;

  std::size_t K() const noexcept { return static_cast<std::size_t>(Z.cols()); }
};

/// Full ordered eigendecomposition that bases of any K are sliced from.
///
/// Each eigenvector is sign-normalized so that its largest-magnitude entry is
/// positive (first such entry on ties). Within a cluster of eigenvalues closer
/// than 1e-10, vectors are ordered by the index of their first entry above
/// 1e-8 in magnitude.
class SpectralDecomposition {
 public:
  SpectralDecomposition(BasisFamily family, Eigen::MatrixXd vectors, Eigen::VectorXd values);

  BasisFamily family() const noexcept { return family_; }
  std::size_t max_K() const noexcept { return static_cast<std::size_t>(values_.size()); }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  const Eigen::MatrixXd& vectors() const noexcept { return vectors_; }

  /// The first K columns. Throws ConfigError unless 1 <= K <= max_K().
  BasisMatrix leading(std::size_t K) const;

 private:
  BasisFamily family_;
  Eigen::MatrixXd vectors_;
  Eigen::VectorXd values_;
};

/// Eigenvectors of the doubly centred adjacency orthogonal to the constant
/// vector (n-1 of them), eigenvalues descending.
SpectralDecomposition mem_decomposition(const AdjacencyGraph& graph);

/// Eigenvectors of Q = D - rho W with eigenvalue above 1e-8 * lambda_max(Q),
/// ascending. For rho = 1 there are n - c of them (c = component count).
SpectralDecomposition icar_decomposition(const AdjacencyGraph& graph, const PrecisionSpec& spec = {});

/// Requires 1 <= K <= n-1. Warns when non-positive eigenvalues are retained.
BasisMatrix mem_basis(const AdjacencyGraph& graph, std::size_t K);

/// Requires 1 <= K <= number of nonzero eigenvalues of Q.
BasisMatrix icar_basis(const AdjacencyGraph& graph, const PrecisionSpec& spec, std::size_t K);

/// CSV with the unit id followed by columns z1..zK.
void write_basis(const std::filesystem::path& path, const BasisMatrix& basis, const std::vector<std::string>& unit_ids);

struct FitMetrics;

/// What a candidate K yields: the residuals to test, plus optional fit metrics.
struct CandidateEvaluation {
  Eigen::VectorXd residuals;
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  std::size_t active_bases = 0;
};

/// One row of a basis-dimension sweep.
struct SweepRow {
  std::size_t K = 0;
  BasisFamily family = BasisFamily::Icar;
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  std::size_t active_bases = 0;
  double moran_I = 0.0;
  double moran_p = 0.0;
};

struct KSelection {
  std::size_t K = 0;
  bool passed = false;  // false: no candidate passed and K is the largest one
  std::vector<SweepRow> rows;
};

struct MoranOptions;

/// Smallest candidate whose residual Moran p-value exceeds alpha, or the
/// largest candidate flagged as not passing. Candidates must ascend.
KSelection select_K(const std::vector<std::size_t>& candidates,
                    const std::function<CandidateEvaluation(std::size_t)>& residual_provider,
                    const AdjacencyGraph& graph, double alpha, BasisFamily family, const MoranOptions& moran);

KSelection select_K(const std::vector<std::size_t>& candidates,
                    const std::function<CandidateEvaluation(std::size_t)>& residual_provider,
                    const AdjacencyGraph& graph, double alpha = 0.05, BasisFamily family = BasisFamily::Icar);

}  // namespace spatialdr
