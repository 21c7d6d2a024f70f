#include "spatialdr/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "spatialdr/csv.hpp"
#include "spatialdr/error.hpp"
#include "spatialdr/log.hpp"

namespace spatialdr {

void ColumnSpec::validate() const {
  if (id_col.empty()) throw ConfigError("id column name is empty");
  if (outcome_col.empty()) throw ConfigError("outcome column name is empty");
  if (treatment_cols.empty()) throw ConfigError("at least one treatment column is required");
  std::unordered_set<std::string> seen;
  auto claim = [&](const std::string& name) {
    if (name.empty()) throw ConfigError("empty column name in column spec");
    if (!seen.insert(name).second) throw ConfigError("column '" + name + "' is named more than once in column spec");
  };
  claim(id_col);
  claim(outcome_col);
  for (const auto& c : treatment_cols) claim(c);
  for (const auto& c : confounder_cols) claim(c);
}

Dataset::Dataset(std::vector<std::string> unit_ids, Eigen::VectorXd outcome, std::vector<NamedColumn> treatments,
                 std::vector<NamedColumn> confounders, std::size_t dropped_rows)
    : unit_ids_(std::move(unit_ids)),
      outcome_(std::move(outcome)),
      treatments_(std::move(treatments)),
      confounders_(std::move(confounders)),
      dropped_rows_(dropped_rows) {
  const auto n = static_cast<Eigen::Index>(unit_ids_.size());
  if (n < 3) throw DataError("insufficient data: " + std::to_string(n) + " complete rows, need at least 3");
  if (outcome_.size() != n) throw DataError("outcome length does not match unit count");
  if (treatments_.empty()) throw ConfigError("dataset needs at least one treatment");
  for (const auto* group : {&treatments_, &confounders_}) {
    for (const auto& [name, col] : *group) {
      if (col.size() != n) throw DataError("column '" + name + "' length does not match unit count");
      if (!col.allFinite()) throw DataError("column '" + name + "' has non-finite values");
    }
  }
  if (!outcome_.allFinite()) throw DataError("outcome has non-finite values");
  std::unordered_set<std::string> ids;
  for (const auto& id : unit_ids_) {
    if (!ids.insert(id).second) throw DataError("duplicate unit id: " + id);
  }
}

const Eigen::VectorXd& Dataset::treatment(const std::string& name) const {
  for (const auto& [n, col] : treatments_) {
    if (n == name) return col;
  }
  throw ConfigError("unknown treatment: " + name);
}

Eigen::MatrixXd Dataset::confounder_matrix() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(confounders_.size()));
  for (std::size_t k = 0; k < confounders_.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = confounders_[k].second;
  return x;
}

std::vector<std::string> Dataset::confounder_names() const {
  std::vector<std::string> names;
  for (const auto& c : confounders_) names.push_back(c.first);
  return names;
}

Dataset Dataset::with_outcome(Eigen::VectorXd outcome) const {
  return Dataset(unit_ids_, std::move(outcome), treatments_, confounders_, dropped_rows_);
}

Dataset load_dataset(const std::filesystem::path& csv_path, const ColumnSpec& spec) {
  spec.validate();
  if (!std::filesystem::exists(csv_path)) throw DataError("data file not found: " + csv_path.string());
  const auto table = csv::read(csv_path);

  auto column = [&](const std::string& name) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) {
      throw ConfigError(csv_path.string() + ": header has no column '" + name + "'");
    }
    return static_cast<std::size_t>(it - table.header.begin());
  };
  const std::size_t id_idx = column(spec.id_col);
  const std::size_t y_idx = column(spec.outcome_col);
  std::vector<std::size_t> numeric_idx{y_idx};
  for (const auto& c : spec.treatment_cols) numeric_idx.push_back(column(c));
  for (const auto& c : spec.confounder_cols) numeric_idx.push_back(column(c));

  auto is_missing = [](const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t'; });
  };

  std::vector<std::string> ids;
  std::vector<std::vector<double>> values(numeric_idx.size());
  std::size_t dropped = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    bool missing = is_missing(row[id_idx]);
    for (std::size_t idx : numeric_idx) missing = missing || is_missing(row[idx]);
    if (missing) {
      ++dropped;
      continue;
    }
    for (std::size_t k = 0; k < numeric_idx.size(); ++k) {
      double v = 0.0;
      const auto& cell = row[numeric_idx[k]];
      if (!csv::parse_double(cell, v) || !std::isfinite(v)) {
        throw DataError(csv_path.string() + ": line " + std::to_string(table.line_numbers[r]) + " (data row " +
                        std::to_string(r + 1) + "), column '" + table.header[numeric_idx[k]] +
                        "': not a number: '" + cell + "'");
      }
      values[k].push_back(v);
    }
    ids.push_back(row[id_idx]);
  }
  if (dropped > 0) log::warn("dropped " + std::to_string(dropped) + " row(s) with missing values");

  auto to_vec = [](const std::vector<double>& v) {
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  std::vector<NamedColumn> treatments, confounders;
  std::size_t k = 1;
  for (const auto& c : spec.treatment_cols) treatments.emplace_back(c, to_vec(values[k++]));
  for (const auto& c : spec.confounder_cols) confounders.emplace_back(c, to_vec(values[k++]));
  return Dataset(std::move(ids), to_vec(values[0]), std::move(treatments), std::move(confounders), dropped);
}

void write_dataset(const std::filesystem::path& csv_path, const Dataset& dataset, const ColumnSpec& spec) {
  spec.validate();
  std::string out = csv::escape(spec.id_col) + "," + csv::escape(spec.outcome_col);
  for (const auto& c : spec.treatment_cols) out += "," + csv::escape(c);
  for (const auto& c : spec.confounder_cols) out += "," + csv::escape(c);
  out += '\n';

  std::vector<const Eigen::VectorXd*> cols;
  for (const auto& c : spec.treatment_cols) cols.push_back(&dataset.treatment(c));
  for (const auto& c : spec.confounder_cols) {
    const auto& conf = dataset.confounders();
    auto it = std::find_if(conf.begin(), conf.end(), [&](const NamedColumn& nc) { return nc.first == c; });
    if (it == conf.end()) throw ConfigError("unknown confounder: " + c);
    cols.push_back(&it->second);
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out += csv::escape(dataset.unit_ids()[i]);
    out += ',';
    out += csv::format_double(dataset.outcome()(ii));
    for (const auto* col : cols) {
      out += ',';
      out += csv::format_double((*col)(ii));
    }
    out += '\n';
  }
  csv::write_atomic(csv_path, out);
}

GraphAlignment align_graph(const Dataset& dataset, const AdjacencyGraph& graph,
                           const std::vector<std::string>& graph_ids) {
  if (graph_ids.size() != graph.size()) {
    throw ConfigError("graph has " + std::to_string(graph.size()) + " nodes but " +
                      std::to_string(graph_ids.size()) + " ids");
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < graph_ids.size(); ++i) index.emplace(graph_ids[i], i);

  GraphAlignment out;
  std::vector<std::string> missing;
  for (const auto& id : dataset.unit_ids()) {
    auto it = index.find(id);
    if (it == index.end()) {
      missing.push_back(id);
    } else {
      out.graph_index.push_back(it->second);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ...";
    throw DataError(std::to_string(missing.size()) + " unit id(s) absent from graph: " + list);
  }
  out.graph = graph.induced(out.graph_index);
  return out;
}

}  // namespace spatialdr
