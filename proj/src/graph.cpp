#include "spatialdr/graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "spatialdr/csv.hpp"
#include "spatialdr/error.hpp"
#include "spatialdr/log.hpp"

namespace spatialdr {

AdjacencyGraph::AdjacencyGraph(std::size_t n, const std::vector<Edge>& pairs) : neighbors_(n) {
  std::vector<Edge> normalized;
  normalized.reserve(pairs.size());
  for (auto [a, b] : pairs) {
    if (a >= n || b >= n) {
      throw ConfigError("edge (" + std::to_string(a) + "," + std::to_string(b) + ") out of range for " +
                        std::to_string(n) + " nodes");
    }
    if (a == b) {
      ++dropped_self_loops_;
      continue;
    }
    normalized.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(normalized.begin(), normalized.end());
  const auto last = std::unique(normalized.begin(), normalized.end());
  dropped_duplicates_ = static_cast<std::size_t>(normalized.end() - last);
  normalized.erase(last, normalized.end());
  for (auto [a, b] : normalized) {
    neighbors_[a].push_back(b);
    neighbors_[b].push_back(a);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
  edge_count_ = normalized.size();
}

std::vector<std::size_t> AdjacencyGraph::degrees() const {
  std::vector<std::size_t> d(size());
  for (std::size_t i = 0; i < size(); ++i) d[i] = neighbors_[i].size();
  return d;
}

bool AdjacencyGraph::has_edge(std::size_t i, std::size_t j) const {
  const auto& nb = neighbors_.at(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

std::vector<AdjacencyGraph::Edge> AdjacencyGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count_);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j : neighbors_[i]) {
      if (i < j) out.emplace_back(i, j);
    }
  }
  return out;
}

Eigen::MatrixXd AdjacencyGraph::dense_adjacency() const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j : neighbors_[i]) w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
  }
  return w;
}

Eigen::SparseMatrix<double> AdjacencyGraph::sparse_adjacency() const {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * edge_count_);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j : neighbors_[i]) {
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), 1.0);
    }
  }
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::SparseMatrix<double> w(n, n);
  w.setFromTriplets(triplets.begin(), triplets.end());
  return w;
}

AdjacencyGraph AdjacencyGraph::induced(const std::vector<std::size_t>& nodes) const {
  constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
  std::vector<std::size_t> position(size(), kAbsent);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k] >= size()) throw ConfigError("induced subgraph node out of range");
    if (position[nodes[k]] != kAbsent) throw ConfigError("induced subgraph node listed twice");
    position[nodes[k]] = k;
  }
  std::vector<Edge> kept;
  for (auto [a, b] : edges()) {
    if (position[a] != kAbsent && position[b] != kAbsent) kept.emplace_back(position[a], position[b]);
  }
  return AdjacencyGraph(nodes.size(), kept);
}

void PrecisionSpec::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1], got " + std::to_string(rho));
}

AdjacencyGraph from_edge_list(const std::vector<std::pair<std::string, std::string>>& pairs,
                              const std::vector<std::string>& node_ids) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(node_ids.size());
  for (std::size_t i = 0; i < node_ids.size(); ++i) {
    if (!index.emplace(node_ids[i], i).second) throw DataError("duplicate node id: " + node_ids[i]);
  }
  std::vector<AdjacencyGraph::Edge> edges;
  edges.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    auto ia = index.find(a);
    auto ib = index.find(b);
    if (ia == index.end() || ib == index.end()) {
      throw DataError("edge (" + a + "," + b + ") references unknown id " + (ia == index.end() ? a : b));
    }
    edges.emplace_back(ia->second, ib->second);
  }
  AdjacencyGraph graph(node_ids.size(), edges);
  if (graph.dropped_self_loops() > 0) {
    log::warn("dropped " + std::to_string(graph.dropped_self_loops()) + " self-loop(s) from edge list");
  }
  if (graph.dropped_duplicates() > 0) {
    log::warn("collapsed " + std::to_string(graph.dropped_duplicates()) + " duplicate edge(s)");
  }
  return graph;
}

Eigen::MatrixXd doubly_center(const AdjacencyGraph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.size());
  if (n < 2) throw ConfigError("doubly_center needs at least 2 nodes");
  // W is symmetric, so row and column sums coincide: Wt_ij = W_ij - r_i/n - r_j/n + s/n^2.
  Eigen::MatrixXd w = graph.dense_adjacency();
  const Eigen::VectorXd r = w.rowwise().sum();
  const double s = r.sum();
  const double nd = static_cast<double>(n);
  const double c = s / (nd * nd);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) w(i, j) += c - (r(i) + r(j)) / nd;  // symmetric in (i, j) bitwise
  }
  return w;
}

Eigen::SparseMatrix<double> precision_matrix(const AdjacencyGraph& graph, const PrecisionSpec& spec) {
  spec.validate();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(graph.size() + 2 * graph.edge_count());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const int ii = static_cast<int>(i);
    triplets.emplace_back(ii, ii, static_cast<double>(graph.degree(i)));
    if (spec.rho != 0.0) {
      for (std::size_t j : graph.neighbors(i)) triplets.emplace_back(ii, static_cast<int>(j), -spec.rho);
    }
  }
  const auto n = static_cast<Eigen::Index>(graph.size());
  Eigen::SparseMatrix<double> q(n, n);
  q.setFromTriplets(triplets.begin(), triplets.end());
  q.prune(0.0);
  return q;
}

std::vector<std::size_t> connected_components(const AdjacencyGraph& graph) {
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> label(graph.size(), kUnset);
  std::vector<std::size_t> stack;
  std::size_t next = 0;
  for (std::size_t start = 0; start < graph.size(); ++start) {
    if (label[start] != kUnset) continue;
    label[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (std::size_t u : graph.neighbors(v)) {
        if (label[u] == kUnset) {
          label[u] = next;
          stack.push_back(u);
        }
      }
    }
    ++next;
  }
  return label;
}

std::size_t component_count(const AdjacencyGraph& graph) {
  const auto labels = connected_components(graph);
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

AdjacencyGraph rook_lattice(std::size_t rows, std::size_t cols) {
  std::vector<AdjacencyGraph::Edge> edges;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(i, i + 1);
      if (r + 1 < rows) edges.emplace_back(i, i + cols);
    }
  }
  return AdjacencyGraph(rows * cols, edges);
}

std::vector<std::pair<std::string, std::string>> read_edge_list(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  auto column = [&](const std::string& name) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw ConfigError(path.string() + ": edge list lacks column '" + name + "'");
    return static_cast<std::size_t>(it - table.header.begin());
  };
  const std::size_t src = column("src");
  const std::size_t dst = column("dst");
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row[src].empty() || row[dst].empty()) {
      throw DataError(path.string() + ": empty id on line " + std::to_string(table.line_numbers[r]));
    }
    pairs.emplace_back(row[src], row[dst]);
  }
  return pairs;
}

void write_edge_list(const std::filesystem::path& path, const AdjacencyGraph& graph,
                     const std::vector<std::string>& node_ids) {
  if (node_ids.size() != graph.size()) throw ConfigError("node id count does not match graph size");
  std::string out = "src,dst\n";
  for (auto [a, b] : graph.edges()) {
    out += csv::escape(node_ids[a]);
    out += ',';
    out += csv::escape(node_ids[b]);
    out += '\n';
  }
  csv::write_atomic(path, out);
}

AdjacencyGraph read_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0) {
    throw DataError(path.string() + ": missing %%MatrixMarket banner");
  }
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (object != "matrix" || format != "coordinate") {
    throw DataError(path.string() + ": only coordinate matrices are supported");
  }
  if (field != "pattern" && field != "real" && field != "integer") {
    throw DataError(path.string() + ": unsupported field type " + field);
  }
  if (symmetry != "symmetric" && symmetry != "general") {
    throw DataError(path.string() + ": unsupported symmetry " + symmetry);
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '%') break;
  }
  std::istringstream dims(line);
  std::size_t rows = 0, cols = 0, nnz = 0;
  if (!(dims >> rows >> cols >> nnz) || rows != cols) throw DataError(path.string() + ": bad size line");

  std::vector<AdjacencyGraph::Edge> edges;
  edges.reserve(nnz);
  for (std::size_t k = 0; k < nnz; ++k) {
    if (!std::getline(in, line)) throw DataError(path.string() + ": fewer entries than declared");
    if (line.empty() || line[0] == '%') {
      --k;
      continue;
    }
    std::istringstream entry(line);
    std::size_t i = 0, j = 0;
    double value = 1.0;
    if (!(entry >> i >> j) || i == 0 || j == 0 || i > rows || j > rows) {
      throw DataError(path.string() + ": bad entry '" + line + "'");
    }
    if (field != "pattern" && !(entry >> value)) throw DataError(path.string() + ": missing value in '" + line + "'");
    if (value == 0.0) continue;
    if (value != 1.0) throw DataError(path.string() + ": adjacency weights must be binary, got " + line);
    edges.emplace_back(i - 1, j - 1);
  }
  return AdjacencyGraph(rows, edges);
}

}  // namespace spatialdr
