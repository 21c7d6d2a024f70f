#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "spatialdr/graph.hpp"

namespace spatialdr {

struct ColumnSpec {
  std::string id_col;
  std::string outcome_col;
  std::vector<std::string> treatment_cols;
  std::vector<std::string> confounder_cols;

  /// Throws ConfigError unless the four groups are pairwise disjoint and at
  /// least one treatment is named.
  void validate() const;
};

using NamedColumn = std::pair<std::string, Eigen::VectorXd>;

/// Complete-case unit-level data. Columns keep ColumnSpec order.
class Dataset {
 public:
  Dataset(std::vector<std::string> unit_ids, Eigen::VectorXd outcome, std::vector<NamedColumn> treatments,
          std::vector<NamedColumn> confounders, std::size_t dropped_rows = 0);

  std::size_t size() const noexcept { return unit_ids_.size(); }
  const std::vector<std::string>& unit_ids() const noexcept { return unit_ids_; }
  const Eigen::VectorXd& outcome() const noexcept { return outcome_; }
  const std::vector<NamedColumn>& treatments() const noexcept { return treatments_; }
  const std::vector<NamedColumn>& confounders() const noexcept { return confounders_; }

  /// Throws ConfigError for an unknown name.
  const Eigen::VectorXd& treatment(const std::string& name) const;
  Eigen::MatrixXd confounder_matrix() const;
  std::vector<std::string> confounder_names() const;

  std::size_t dropped_rows() const noexcept { return dropped_rows_; }

  /// Same units and covariates with the outcome replaced.
  Dataset with_outcome(Eigen::VectorXd outcome) const;

 private:
  std::vector<std::string> unit_ids_;
  Eigen::VectorXd outcome_;
  std::vector<NamedColumn> treatments_;
  std::vector<NamedColumn> confounders_;
  std::size_t dropped_rows_ = 0;
};

/// Listwise deletion on the columns named in `spec`; other columns are ignored.
Dataset load_dataset(const std::filesystem::path& csv_path, const ColumnSpec& spec);

void write_dataset(const std::filesystem::path& csv_path, const Dataset& dataset, const ColumnSpec& spec);

struct GraphAlignment {
  std::vector<std::size_t> graph_index;  // graph_index[k] = graph node for dataset row k
  AdjacencyGraph graph;                  // induced subgraph in dataset row order
};

/// Maps dataset rows onto graph nodes and drops graph nodes not in the data.
GraphAlignment align_graph(const Dataset& dataset, const AdjacencyGraph& graph,
                           const std::vector<std::string>& graph_ids);

}  // namespace spatialdr
