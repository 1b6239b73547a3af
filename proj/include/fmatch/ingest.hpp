#pragma once

#include "fmatch/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fmatch {

/// Two half-observed datasets with columns canonicalized to (X, Y) and
/// (X, Z). X order follows file A; Y keeps file A's order of its private
/// columns, Z file B's.
struct DatasetPair {
  Matrix data_a;  // n_A x (p_X + p_Y)
  Matrix data_b;  // n_B x (p_X + p_Z)
  PartitionSpec partition;
  std::vector<std::string> shared_columns;
};

/// A headered numeric CSV in memory.
struct NamedMatrix {
  std::vector<std::string> names;
  Matrix values;
};

NamedMatrix load_csv_matrix(const std::string& path);

/// Loads two headered CSV files. An empty `shared` list infers the shared
/// block as the intersection of the header names.
DatasetPair load_pair(const std::string& path_a, const std::string& path_b,
                      const std::vector<std::string>& shared = {});

enum class Centering {
  PerDataset,  // each file centered by its own column means
  PooledX,     // shared columns centered by the stacked mean of both files
};

enum class Scaling { None, UnitVariance };

/// Centers (and optionally scales to unit variance) the columns, then forms
/// the two scatter matrices. Requires at least two rows per file.
ObservedScatter to_scatter(const DatasetPair& pair,
                           Centering centering = Centering::PerDataset,
                           Scaling scaling = Scaling::None);

struct StoredModel {
  FactorModel model;
  double loglik = 0.0;
  bool converged = false;
  std::uint64_t seed = 0;
};

/// Versioned JSON persistence; doubles stored at round-trip precision.
void save_model(const StoredModel& stored, const std::string& path);
StoredModel load_model(const std::string& path);

/// Observed covariance blocks supplied directly instead of as raw data.
struct CovarianceBlocks {
  PartialCovariance blocks;
  long n_a = 0;
  long n_b = 0;
};

/// Reads {p_X,p_Y,p_Z,n_A,n_B,xx,xy,xz,yy,zz[,labels]} with matrices as
/// nested row arrays.
CovarianceBlocks load_blocks(const std::string& path);

}  // namespace fmatch
