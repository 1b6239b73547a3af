#include "fmatch/ingest.hpp"

#include "fmatch/errors.hpp"
#include "fmatch/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace fmatch {

namespace {

using Table = std::vector<std::vector<std::string>>;

// RFC-4180-style parser: quoted fields may contain commas, newlines and
// doubled quotes; rows end at \n or \r\n.
Table parse_csv(const std::string& text, const std::string& path) {
  Table rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        field_started = true;  // a delimiter implies another field follows
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (in_quotes) throw SchemaMismatchError(path + ": unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) end_row();

  if (rows.empty()) throw EmptyFileError(path + ": no header row");
  if (rows.size() < 2) throw EmptyFileError(path + ": no data rows");
  const std::size_t width = rows.front().size();
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].size() != width)
      throw SchemaMismatchError(path + ": row " + std::to_string(r + 1) +
                                " has " + std::to_string(rows[r].size()) +
                                " cells, expected " + std::to_string(width));
  return rows;
}

double parse_cell(const std::string& cell, const std::string& path, long row,
                  long col) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || begin == end)
    throw NonNumericCellError(path, row, col, cell);
  return value;
}

int find_column(const NamedMatrix& table, const std::string& name,
                const std::string& path) {
  auto it = std::find(table.names.begin(), table.names.end(), name);
  if (it == table.names.end())
    throw MissingColumnError(path + ": missing column '" + name + "'");
  return static_cast<int>(it - table.names.begin());
}

}  // namespace

NamedMatrix load_csv_matrix(const std::string& path) {
  Table rows = parse_csv(read_text_file(path), path);
  NamedMatrix out;
  out.names = rows.front();
  std::unordered_set<std::string> seen;
  for (const auto& name : out.names)
    if (!seen.insert(name).second)
      throw SchemaMismatchError(path + ": duplicate column name '" + name + "'");

  const auto n = static_cast<Eigen::Index>(rows.size() - 1);
  const auto p = static_cast<Eigen::Index>(out.names.size());
  out.values = Matrix(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      out.values(i, j) = parse_cell(rows[static_cast<std::size_t>(i + 1)]
                                        [static_cast<std::size_t>(j)],
                                    path, i + 2, j + 1);
  return out;
}

DatasetPair load_pair(const std::string& path_a, const std::string& path_b,
                      const std::vector<std::string>& shared) {
  NamedMatrix a = load_csv_matrix(path_a);
  NamedMatrix b = load_csv_matrix(path_b);

  std::vector<std::string> x_names = shared;
  if (!x_names.empty()) {
    for (const auto& name : x_names) {
      find_column(a, name, path_a);
      find_column(b, name, path_b);
    }
  }
  if (x_names.empty()) {
    std::unordered_set<std::string> in_b(b.names.begin(), b.names.end());
    for (const auto& name : a.names)
      if (in_b.count(name)) x_names.push_back(name);
    if (x_names.empty())
      throw MissingColumnError("no shared columns between " + path_a + " and " +
                               path_b);
  }

  std::unordered_set<std::string> x_set(x_names.begin(), x_names.end());
  std::vector<std::string> y_names, z_names;
  for (const auto& name : a.names)
    if (!x_set.count(name)) y_names.push_back(name);
  for (const auto& name : b.names)
    if (!x_set.count(name)) z_names.push_back(name);
  for (const auto& name : z_names)
    if (std::find(y_names.begin(), y_names.end(), name) != y_names.end())
      throw SchemaMismatchError("column '" + name +
                                "' appears in both files but is not listed as shared");

  DatasetPair pair;
  pair.shared_columns = x_names;
  pair.partition.p_x = static_cast<int>(x_names.size());
  pair.partition.p_y = static_cast<int>(y_names.size());
  pair.partition.p_z = static_cast<int>(z_names.size());
  pair.partition.labels = x_names;
  pair.partition.labels.insert(pair.partition.labels.end(), y_names.begin(),
                               y_names.end());
  pair.partition.labels.insert(pair.partition.labels.end(), z_names.begin(),
                               z_names.end());
  pair.partition.validate();

  pair.data_a = Matrix(a.values.rows(), pair.partition.p_a());
  int col = 0;
  for (const auto& name : x_names)
    pair.data_a.col(col++) = a.values.col(find_column(a, name, path_a));
  for (const auto& name : y_names)
    pair.data_a.col(col++) = a.values.col(find_column(a, name, path_a));

  pair.data_b = Matrix(b.values.rows(), pair.partition.p_b());
  col = 0;
  for (const auto& name : x_names)
    pair.data_b.col(col++) = b.values.col(find_column(b, name, path_b));
  for (const auto& name : z_names)
    pair.data_b.col(col++) = b.values.col(find_column(b, name, path_b));
  return pair;
}

namespace {

bool near_zero_variance(double variance, double mean) {
  return variance <= 1e-24 * (mean * mean + 1.0);
}

}  // namespace

ObservedScatter to_scatter(const DatasetPair& pair, Centering centering,
                           Scaling scaling) {
  pair.partition.validate();
  const int p_x = pair.partition.p_x;
  const auto n_a = static_cast<double>(pair.data_a.rows());
  const auto n_b = static_cast<double>(pair.data_b.rows());
  if (pair.data_a.rows() < 2 || pair.data_b.rows() < 2)
    throw std::invalid_argument("to_scatter: need at least 2 rows per dataset");
  if (pair.data_a.cols() != pair.partition.p_a() ||
      pair.data_b.cols() != pair.partition.p_b())
    throw std::invalid_argument("to_scatter: column counts do not match partition");

  Matrix a = pair.data_a;
  Matrix b = pair.data_b;

  Eigen::RowVectorXd mean_a = a.colwise().mean();
  Eigen::RowVectorXd mean_b = b.colwise().mean();
  if (centering == Centering::PooledX) {
    for (int j = 0; j < p_x; ++j) {
      const double pooled =
          (a.col(j).sum() + b.col(j).sum()) / (n_a + n_b);
      mean_a(j) = pooled;
      mean_b(j) = pooled;
    }
  }
  a.rowwise() -= mean_a;
  b.rowwise() -= mean_b;

  if (scaling == Scaling::UnitVariance) {
    auto scale_columns = [&](Matrix& m, int from, int count, double n,
                             const Eigen::RowVectorXd& means,
                             const std::vector<std::string>& labels,
                             int label_offset) {
      for (int j = from; j < from + count; ++j) {
        const double var = m.col(j).squaredNorm() / n;
        if (near_zero_variance(var, means(j))) {
          const std::string name =
              labels.empty() ? "column " + std::to_string(j + 1)
                             : "'" + labels[static_cast<std::size_t>(
                                         label_offset + j - from)] + "'";
          throw ZeroVarianceError("to_scatter: zero variance in " + name);
        }
        m.col(j) /= std::sqrt(var);
      }
    };
    if (centering == Centering::PooledX) {
      for (int j = 0; j < p_x; ++j) {
        const double var =
            (a.col(j).squaredNorm() + b.col(j).squaredNorm()) / (n_a + n_b);
        if (near_zero_variance(var, mean_a(j)))
          throw ZeroVarianceError(
              "to_scatter: zero variance in shared column " + std::to_string(j + 1));
        const double sd = std::sqrt(var);
        a.col(j) /= sd;
        b.col(j) /= sd;
      }
    } else {
      scale_columns(a, 0, p_x, n_a, mean_a, pair.partition.labels, 0);
      scale_columns(b, 0, p_x, n_b, mean_b, pair.partition.labels, 0);
    }
    scale_columns(a, p_x, pair.partition.p_y, n_a, mean_a,
                  pair.partition.labels, pair.partition.y_offset());
    scale_columns(b, p_x, pair.partition.p_z, n_b, mean_b,
                  pair.partition.labels, pair.partition.z_offset());
  }

  return ObservedScatter::create(pair.partition, a.transpose() * a,
                                 b.transpose() * b, n_a, n_b);
}

void save_model(const StoredModel& stored, const std::string& path) {
  stored.model.validate();
  const FactorModel& m = stored.model;
  nlohmann::json j;
  j["version"] = 1;
  j["q"] = m.q();
  j["partition"] = {{"p_X", m.partition.p_x},
                    {"p_Y", m.partition.p_y},
                    {"p_Z", m.partition.p_z},
                    {"labels", m.partition.labels}};
  std::vector<double> lambda;
  lambda.reserve(static_cast<std::size_t>(m.loadings.size()));
  for (int i = 0; i < m.loadings.rows(); ++i)
    for (int jj = 0; jj < m.loadings.cols(); ++jj)
      lambda.push_back(m.loadings(i, jj));
  j["lambda"] = lambda;
  j["psi"] = std::vector<double>(m.uniquenesses.data(),
                                 m.uniquenesses.data() + m.uniquenesses.size());
  j["loglik"] = stored.loglik;
  j["converged"] = stored.converged;
  j["seed"] = stored.seed;
  write_text_file(path, j.dump(2) + "\n");
}

StoredModel load_model(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaMismatchError(path + ": not valid JSON: " + e.what());
  }

  auto require = [&](const nlohmann::json& node, const char* key) -> const nlohmann::json& {
    if (!node.contains(key))
      throw SchemaMismatchError(path + ": missing field '" + key + "'");
    return node.at(key);
  };

  try {
    const int version = require(j, "version").get<int>();
    if (version != 1)
      throw VersionMismatchError(path + ": unsupported model file version " +
                                 std::to_string(version));

    StoredModel out;
    const auto& part = require(j, "partition");
    out.model.partition.p_x = require(part, "p_X").get<int>();
    out.model.partition.p_y = require(part, "p_Y").get<int>();
    out.model.partition.p_z = require(part, "p_Z").get<int>();
    out.model.partition.labels =
        require(part, "labels").get<std::vector<std::string>>();

    const int q = require(j, "q").get<int>();
    const auto lambda = require(j, "lambda").get<std::vector<double>>();
    const auto psi = require(j, "psi").get<std::vector<double>>();
    const int p = out.model.partition.p_x + out.model.partition.p_y +
                  out.model.partition.p_z;
    if (q < 1 || lambda.size() != static_cast<std::size_t>(p) * q)
      throw SchemaMismatchError(path + ": lambda length does not match p*q");
    if (psi.size() != static_cast<std::size_t>(p))
      throw SchemaMismatchError(path + ": psi length does not match p");

    out.model.loadings = Matrix(p, q);
    for (int i = 0; i < p; ++i)
      for (int jj = 0; jj < q; ++jj)
        out.model.loadings(i, jj) = lambda[static_cast<std::size_t>(i) * q + jj];
    out.model.uniquenesses =
        Eigen::Map<const Vector>(psi.data(), static_cast<Eigen::Index>(psi.size()));
    out.loglik = require(j, "loglik").get<double>();
    out.converged = require(j, "converged").get<bool>();
    out.seed = require(j, "seed").get<std::uint64_t>();

    try {
      out.model.validate();
    } catch (const std::invalid_argument& e) {
      throw SchemaMismatchError(path + ": " + e.what());
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatchError(path + ": malformed field: " + e.what());
  }
}

CovarianceBlocks load_blocks(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaMismatchError(path + ": not valid JSON: " + e.what());
  }

  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key))
      throw SchemaMismatchError(path + ": missing field '" + key + "'");
    return j.at(key);
  };
  auto read_matrix = [&](const char* key, Eigen::Index rows,
                         Eigen::Index cols) -> Matrix {
    const auto& node = require(key);
    if (!node.is_array() || node.size() != static_cast<std::size_t>(rows))
      throw SchemaMismatchError(path + ": field '" + key + "' needs " +
                                std::to_string(rows) + " rows");
    Matrix out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& row = node.at(static_cast<std::size_t>(i));
      if (!row.is_array() || row.size() != static_cast<std::size_t>(cols))
        throw SchemaMismatchError(path + ": field '" + key + "' needs " +
                                  std::to_string(cols) + " columns");
      for (Eigen::Index jj = 0; jj < cols; ++jj)
        out(i, jj) = row.at(static_cast<std::size_t>(jj)).get<double>();
    }
    return out;
  };

  try {
    CovarianceBlocks out;
    PartitionSpec& part = out.blocks.partition;
    part.p_x = require("p_X").get<int>();
    part.p_y = require("p_Y").get<int>();
    part.p_z = require("p_Z").get<int>();
    if (j.contains("labels"))
      part.labels = j.at("labels").get<std::vector<std::string>>();
    try {
      part.validate();
    } catch (const std::invalid_argument& e) {
      throw SchemaMismatchError(path + ": " + e.what());
    }
    out.n_a = require("n_A").get<long>();
    out.n_b = require("n_B").get<long>();
    if (out.n_a < 1 || out.n_b < 1)
      throw SchemaMismatchError(path + ": n_A and n_B must be positive");

    out.blocks.xx = read_matrix("xx", part.p_x, part.p_x);
    out.blocks.xy = read_matrix("xy", part.p_x, part.p_y);
    out.blocks.xz = read_matrix("xz", part.p_x, part.p_z);
    out.blocks.yy = read_matrix("yy", part.p_y, part.p_y);
    out.blocks.zz = read_matrix("zz", part.p_z, part.p_z);
    try {
      out.blocks.validate();
    } catch (const std::invalid_argument& e) {
      throw SchemaMismatchError(path + ": " + e.what());
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatchError(path + ": malformed field: " + e.what());
  }
}

}  // namespace fmatch
