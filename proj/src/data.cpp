#include "cqr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cqr/error.hpp"

namespace cqr {

// ---------------------------------------------------------------------------
// ClusteredDataset
// ---------------------------------------------------------------------------

ClusteredDataset::ClusteredDataset(std::vector<std::string> ids, std::vector<Index> sizes,
                                   VectorXd y, MatrixXd X, std::vector<Index> z_columns,
                                   std::vector<std::string> term_names, std::string response_name,
                                   std::string cluster_name)
    : ids_(std::move(ids)),
      y_(std::move(y)),
      X_(std::move(X)),
      z_columns_(std::move(z_columns)),
      term_names_(std::move(term_names)),
      response_name_(std::move(response_name)),
      cluster_name_(std::move(cluster_name)) {
  if (ids_.empty()) throw Error(ErrorCode::empty_input, "dataset has no clusters");
  if (sizes.size() != ids_.size())
    throw Error(ErrorCode::invalid_argument, "one size per cluster id is required");
  offsets_.assign(1, 0);
  for (Index s : sizes) {
    if (s < 1) throw Error(ErrorCode::invalid_argument, "every cluster needs at least one row");
    offsets_.push_back(offsets_.back() + s);
  }
  if (offsets_.back() != y_.size() || X_.rows() != y_.size())
    throw Error(ErrorCode::invalid_argument, "cluster sizes do not match the number of rows");
  if (X_.cols() < 1) throw Error(ErrorCode::invalid_argument, "fixed design has no columns");
  if (!(X_.col(0).array() == 1.0).all())
    throw Error(ErrorCode::invalid_argument, "first fixed column must be the intercept");
  if (static_cast<Index>(term_names_.size()) != X_.cols())
    throw Error(ErrorCode::invalid_argument, "one term name per fixed column is required");
  if (z_columns_.empty() || static_cast<Index>(z_columns_.size()) > X_.cols())
    throw Error(ErrorCode::invalid_argument, "random design must have 1 <= q <= p columns");
  Z_.resize(X_.rows(), static_cast<Index>(z_columns_.size()));
  for (std::size_t k = 0; k < z_columns_.size(); ++k) {
    const Index c = z_columns_[k];
    if (c < 0 || c >= X_.cols())
      throw Error(ErrorCode::invalid_argument, "random column index out of range");
    if (std::count(z_columns_.begin(), z_columns_.end(), c) > 1)
      throw Error(ErrorCode::invalid_argument, "random columns must be distinct");
    Z_.col(static_cast<Index>(k)) = X_.col(c);
  }
  if (!y_.allFinite() || !X_.allFinite())
    throw Error(ErrorCode::invalid_argument, "dataset contains non-finite values");
}

std::vector<std::string> ClusteredDataset::z_names() const {
  std::vector<std::string> names;
  for (Index c : z_columns_) names.push_back(term_names_[static_cast<std::size_t>(c)]);
  return names;
}

std::vector<Index> ClusteredDataset::cluster_sizes() const {
  std::vector<Index> sizes;
  for (Index i = 0; i < n_clusters(); ++i) sizes.push_back(size(i));
  return sizes;
}

std::vector<Index> ClusteredDataset::cluster_of_obs() const {
  std::vector<Index> out(static_cast<std::size_t>(n_obs()));
  for (Index i = 0; i < n_clusters(); ++i)
    std::fill_n(out.begin() + offset(i), size(i), i);
  return out;
}

ClusteredDataset ClusteredDataset::with_response(VectorXd y) const {
  if (y.size() != n_obs())
    throw Error(ErrorCode::invalid_argument, "response length does not match the dataset");
  ClusteredDataset out = *this;
  out.y_ = std::move(y);
  if (!out.y_.allFinite()) throw Error(ErrorCode::invalid_argument, "response is not finite");
  return out;
}

ClusteredDataset ClusteredDataset::take_clusters(const std::vector<Index>& order,
                                                 bool relabel) const {
  if (order.empty()) throw Error(ErrorCode::empty_input, "no clusters selected");
  Index rows = 0;
  for (Index i : order) {
    if (i < 0 || i >= n_clusters())
      throw Error(ErrorCode::invalid_argument, "cluster index out of range");
    rows += size(i);
  }
  std::vector<std::string> ids;
  std::vector<Index> sizes;
  VectorXd y(rows);
  MatrixXd X(rows, p());
  Index at = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Index i = order[k];
    ids.push_back(relabel ? std::to_string(k + 1) : id(i));
    sizes.push_back(size(i));
    y.segment(at, size(i)) = y_block(i);
    X.middleRows(at, size(i)) = X_block(i);
    at += size(i);
  }
  return ClusteredDataset(std::move(ids), std::move(sizes), std::move(y), std::move(X),
                          z_columns_, term_names_, response_name_, cluster_name_);
}

ClusteredDataset ClusteredDataset::select_rows(const std::vector<std::vector<Index>>& rows) const {
  if (static_cast<Index>(rows.size()) != n_clusters())
    throw Error(ErrorCode::invalid_argument, "one row list per cluster is required");
  Index total = 0;
  for (const auto& r : rows) total += static_cast<Index>(r.size());
  std::vector<Index> sizes;
  VectorXd y(total);
  MatrixXd X(total, p());
  Index at = 0;
  for (Index i = 0; i < n_clusters(); ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (Index local : r) {
      if (local < 0 || local >= size(i))
        throw Error(ErrorCode::invalid_argument, "row index out of range");
      y(at) = y_(offset(i) + local);
      X.row(at) = X_.row(offset(i) + local);
      ++at;
    }
    sizes.push_back(static_cast<Index>(r.size()));
  }
  return ClusteredDataset(ids_, std::move(sizes), std::move(y), std::move(X), z_columns_,
                          term_names_, response_name_, cluster_name_);
}

std::vector<Index> ClusteredDataset::canonical_order() const {
  std::vector<Index> order(static_cast<std::size_t>(n_clusters()));
  std::iota(order.begin(), order.end(), Index{0});
  auto less = [this](Index a, Index b) {
    if (size(a) != size(b)) return size(a) < size(b);
    for (Index j = 0; j < size(a); ++j) {
      const double ya = y_(offset(a) + j), yb = y_(offset(b) + j);
      if (ya != yb) return ya < yb;
    }
    for (Index j = 0; j < size(a); ++j) {
      for (Index c = 0; c < p(); ++c) {
        const double xa = X_(offset(a) + j, c), xb = X_(offset(b) + j, c);
        if (xa != xb) return xa < xb;
      }
    }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), less);
  return order;
}

VectorXd ClusteredDataset::offsets_from(const RandomEffects& u) const {
  if (u.rows() != n_clusters() || u.cols() != q())
    throw Error(ErrorCode::invalid_argument, "random effects must be N x q");
  VectorXd out(n_obs());
  for (Index i = 0; i < n_clusters(); ++i)
    out.segment(offset(i), size(i)) = Z_block(i) * u.row(i).transpose();
  return out;
}

bool ClusteredDataset::operator==(const ClusteredDataset& other) const {
  return ids_ == other.ids_ && offsets_ == other.offsets_ && y_ == other.y_ &&
         X_ == other.X_ && z_columns_ == other.z_columns_ && term_names_ == other.term_names_;
}

// ---------------------------------------------------------------------------
// CSV input
// ---------------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> split_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false, was_quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          field += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? field : trim(field));
      field.clear();
      was_quoted = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw ParseError(line_no, "unterminated quoted field");
  fields.push_back(was_quoted ? field : trim(field));
  return fields;
}

double parse_number(const std::string& s, std::size_t line_no, const std::string& column) {
  if (s.empty()) throw ParseError(line_no, "empty value in column '" + column + "'");
  double value = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value))
    throw ParseError(line_no, "non-numeric value '" + s + "' in column '" + column + "'");
  return value;
}

bool is_intercept_token(const std::string& name) {
  return name == kInterceptName || name == "1";
}

}  // namespace

ClusteredDataset parse_csv(const std::string& text, const CsvSchema& schema) {
  if (schema.response.empty() || schema.cluster_id.empty())
    throw Error(ErrorCode::config, "response and cluster columns must be named");
  if (schema.random_covariates.empty())
    throw Error(ErrorCode::config, "at least one random covariate is required");

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_line(line, line_no);
      break;
    }
  }
  if (header.empty()) throw Error(ErrorCode::empty_input, "input file is empty");

  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::schema, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t y_col = column_of(schema.response);
  const std::size_t id_col = column_of(schema.cluster_id);
  std::vector<std::size_t> x_cols;
  for (const auto& name : schema.fixed_covariates) {
    if (is_intercept_token(name))
      throw Error(ErrorCode::config, "the intercept is implicit; do not list it as fixed");
    x_cols.push_back(column_of(name));
  }

  std::vector<std::string> terms{kInterceptName};
  terms.insert(terms.end(), schema.fixed_covariates.begin(), schema.fixed_covariates.end());
  std::vector<Index> z_columns;
  for (const auto& name : schema.random_covariates) {
    if (is_intercept_token(name)) {
      z_columns.push_back(0);
      continue;
    }
    const auto it = std::find(schema.fixed_covariates.begin(), schema.fixed_covariates.end(), name);
    if (it == schema.fixed_covariates.end())
      throw Error(ErrorCode::config,
                  "random covariate '" + name + "' must also be a fixed covariate");
    z_columns.push_back(static_cast<Index>(it - schema.fixed_covariates.begin()) + 1);
  }

  struct Row {
    double y;
    std::vector<double> x;
  };
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> id_index;
  std::vector<std::vector<Row>> groups;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_line(line, line_no);
    if (fields.size() != header.size())
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                    std::to_string(fields.size()));
    const std::string& id = fields[id_col];
    if (id.empty()) throw ParseError(line_no, "empty cluster id");
    Row row{parse_number(fields[y_col], line_no, schema.response), {}};
    for (std::size_t k = 0; k < x_cols.size(); ++k)
      row.x.push_back(parse_number(fields[x_cols[k]], line_no, schema.fixed_covariates[k]));
    auto [it, inserted] = id_index.emplace(id, groups.size());
    if (inserted) {
      ids.push_back(id);
      groups.emplace_back();
    }
    groups[it->second].push_back(std::move(row));
  }
  if (ids.empty()) throw Error(ErrorCode::empty_input, "input file has no data rows");

  Index n = 0;
  std::vector<Index> sizes;
  for (const auto& g : groups) {
    sizes.push_back(static_cast<Index>(g.size()));
    n += static_cast<Index>(g.size());
  }
  const Index p = static_cast<Index>(terms.size());
  VectorXd y(n);
  MatrixXd X(n, p);
  Index at = 0;
  for (const auto& g : groups) {
    for (const auto& row : g) {
      y(at) = row.y;
      X(at, 0) = 1.0;
      for (Index c = 1; c < p; ++c) X(at, c) = row.x[static_cast<std::size_t>(c - 1)];
      ++at;
    }
  }
  return ClusteredDataset(std::move(ids), std::move(sizes), std::move(y), std::move(X),
                          std::move(z_columns), std::move(terms), schema.response,
                          schema.cluster_id);
}

ClusteredDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_csv(buffer.str(), schema);
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

namespace {

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n ") == std::string::npos && !s.empty()) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

CsvSchema schema_of(const ClusteredDataset& data) {
  CsvSchema schema;
  schema.response = data.response_name();
  schema.cluster_id = data.cluster_name();
  schema.fixed_covariates.assign(data.term_names().begin() + 1, data.term_names().end());
  schema.random_covariates = data.z_names();
  return schema;
}

std::string to_csv(const ClusteredDataset& data) {
  std::string out = quote_if_needed(data.cluster_name()) + "," + quote_if_needed(data.response_name());
  for (Index c = 1; c < data.p(); ++c)
    out += "," + quote_if_needed(data.term_names()[static_cast<std::size_t>(c)]);
  out += "\n";
  for (Index i = 0; i < data.n_clusters(); ++i) {
    const std::string id = quote_if_needed(data.id(i));
    for (Index j = data.offset(i); j < data.offset(i) + data.size(i); ++j) {
      out += id + "," + format_double(data.y()(j));
      for (Index c = 1; c < data.p(); ++c) out += "," + format_double(data.X()(j, c));
      out += "\n";
    }
  }
  return out;
}

void write_csv(const ClusteredDataset& data, const std::string& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::io, "cannot write '" + path + "'");
  file << to_csv(data);
  if (!file) throw Error(ErrorCode::io, "write to '" + path + "' failed");
}

}  // namespace cqr
