#pragma once

#include <string>
#include <vector>

#include "cqr/types.hpp"

namespace cqr {

/// Name of the implicit all-ones column prepended to every fixed design.
inline constexpr const char* kInterceptName = "(Intercept)";

/// Column mapping used when reading a long-format CSV file.
struct CsvSchema {
  std::string response;
  std::string cluster_id;
  std::vector<std::string> fixed_covariates;
  /// Subset of {kInterceptName} U fixed_covariates.
  std::vector<std::string> random_covariates;
};

/// Clustered responses with their fixed (X) and random (Z) designs.
///
/// Observations are stored stacked in cluster-major order. Z is a column
/// subset of X, recorded as `z_columns()`; the first column of X is always
/// the intercept. Instances are immutable after construction.
class ClusteredDataset {
 public:
  ClusteredDataset(std::vector<std::string> ids, std::vector<Index> sizes, VectorXd y,
                   MatrixXd X, std::vector<Index> z_columns, std::vector<std::string> term_names,
                   std::string response_name = "y", std::string cluster_name = "cluster");

  Index n_clusters() const { return static_cast<Index>(ids_.size()); }
  Index n_obs() const { return y_.size(); }
  Index p() const { return X_.cols(); }
  Index q() const { return Z_.cols(); }

  const VectorXd& y() const { return y_; }
  const MatrixXd& X() const { return X_; }
  const MatrixXd& Z() const { return Z_; }

  const std::string& id(Index i) const { return ids_[static_cast<std::size_t>(i)]; }
  Index offset(Index i) const { return offsets_[static_cast<std::size_t>(i)]; }
  Index size(Index i) const {
    return offsets_[static_cast<std::size_t>(i) + 1] - offsets_[static_cast<std::size_t>(i)];
  }

  auto y_block(Index i) const { return y_.segment(offset(i), size(i)); }
  auto X_block(Index i) const { return X_.middleRows(offset(i), size(i)); }
  auto Z_block(Index i) const { return Z_.middleRows(offset(i), size(i)); }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<Index>& z_columns() const { return z_columns_; }
  const std::vector<std::string>& term_names() const { return term_names_; }
  std::vector<std::string> z_names() const;
  const std::string& response_name() const { return response_name_; }
  const std::string& cluster_name() const { return cluster_name_; }
  std::vector<Index> cluster_sizes() const;

  /// Cluster index of every stacked observation.
  std::vector<Index> cluster_of_obs() const;

  /// True when Z is exactly the intercept column.
  bool random_intercept_only() const { return z_columns_.size() == 1 && z_columns_[0] == 0; }

  /// Same design, new responses.
  ClusteredDataset with_response(VectorXd y) const;

  /// Clusters `order[0], order[1], ...` of this dataset. With relabel, ids
  /// become "1".."N" so repeated picks stay unique.
  ClusteredDataset take_clusters(const std::vector<Index>& order, bool relabel = false) const;

  /// Keeps, for each cluster i, the rows rows[i] (local indices, in order).
  ClusteredDataset select_rows(const std::vector<std::vector<Index>>& rows) const;

  /// Deterministic content-based order of clusters. Sorting by content makes
  /// results bitwise independent of the order clusters arrived in.
  std::vector<Index> canonical_order() const;

  /// Stacked Z'u offsets, one per observation, for u with one row per cluster.
  VectorXd offsets_from(const RandomEffects& u) const;

  bool operator==(const ClusteredDataset& other) const;

 private:
  std::vector<std::string> ids_;
  std::vector<Index> offsets_;
  VectorXd y_;
  MatrixXd X_;
  MatrixXd Z_;
  std::vector<Index> z_columns_;
  std::vector<std::string> term_names_;
  std::string response_name_;
  std::string cluster_name_;
};

/// Reads a long-format CSV file. Rows are grouped by cluster id in order of
/// first appearance; within-cluster row order follows the file.
ClusteredDataset load_csv(const std::string& path, const CsvSchema& schema);

/// Same as load_csv on in-memory text.
ClusteredDataset parse_csv(const std::string& text, const CsvSchema& schema);

/// Writes the dataset with 17 significant digits; `schema_of` reloads it.
void write_csv(const ClusteredDataset& data, const std::string& path);
std::string to_csv(const ClusteredDataset& data);
CsvSchema schema_of(const ClusteredDataset& data);

}  // namespace cqr
