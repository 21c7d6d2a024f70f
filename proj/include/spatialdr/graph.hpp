#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace spatialdr {

/// Undirected binary adjacency over nodes 0..n-1. Immutable after construction.
class AdjacencyGraph {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;

  AdjacencyGraph() = default;

  /// Self-loops are dropped and duplicate pairs (in either orientation)
  /// collapsed; both are counted.
  AdjacencyGraph(std::size_t n, const std::vector<Edge>& pairs);

  std::size_t size() const noexcept { return neighbors_.size(); }
  std::size_t edge_count() const noexcept { return edge_count_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_[i]; }
  std::size_t degree(std::size_t i) const { return neighbors_[i].size(); }
  std::vector<std::size_t> degrees() const;
  bool has_edge(std::size_t i, std::size_t j) const;

  /// Edges with first < second, in lexicographic order.
  std::vector<Edge> edges() const;

  std::size_t dropped_self_loops() const noexcept { return dropped_self_loops_; }
  std::size_t dropped_duplicates() const noexcept { return dropped_duplicates_; }

  Eigen::MatrixXd dense_adjacency() const;
  Eigen::SparseMatrix<double> sparse_adjacency() const;

  /// Subgraph induced on `nodes`; node k of the result is nodes[k] here.
  AdjacencyGraph induced(const std::vector<std::size_t>& nodes) const;

 private:
  std::vector<std::vector<std::size_t>> neighbors_;
  std::size_t edge_count_ = 0;
  std::size_t dropped_self_loops_ = 0;
  std::size_t dropped_duplicates_ = 0;
};

struct PrecisionSpec {
  double rho = 1.0;  // 1 is the intrinsic case
  void validate() const;
};

/// Graph from id pairs; every id must appear in node_ids.
AdjacencyGraph from_edge_list(const std::vector<std::pair<std::string, std::string>>& pairs,
                              const std::vector<std::string>& node_ids);

/// (I - 11'/n) W (I - 11'/n), dense.
Eigen::MatrixXd doubly_center(const AdjacencyGraph& graph);

/// Q = D - rho W.
Eigen::SparseMatrix<double> precision_matrix(const AdjacencyGraph& graph, const PrecisionSpec& spec = {});

/// Labels 0..c-1, numbered in order of each component's smallest node.
std::vector<std::size_t> connected_components(const AdjacencyGraph& graph);
std::size_t component_count(const AdjacencyGraph& graph);

/// rows x cols grid with rook (edge-sharing) neighbours, row-major numbering.
AdjacencyGraph rook_lattice(std::size_t rows, std::size_t cols);

/// Edge list CSV with `src,dst` header columns.
std::vector<std::pair<std::string, std::string>> read_edge_list(const std::filesystem::path& path);
void write_edge_list(const std::filesystem::path& path, const AdjacencyGraph& graph,
                     const std::vector<std::string>& node_ids);

/// Matrix Market `coordinate pattern|real|integer symmetric|general`. Entries
/// must be 0 or 1. Node ids are "1".."n" (1-based, as in the file).
AdjacencyGraph read_matrix_market(const std::filesystem::path& path);

}  // namespace spatialdr
