#pragma once

#include "fmatch/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fmatch {

/// Conditional-independence estimate of the unobserved cross block,
/// cov(Y,X) * cov(X,X)^{-1} * cov(X,Z).
Matrix cia_estimate(const PartialCovariance& partial);

/// True when assembling the candidate YZ block into the partial covariance
/// yields a matrix whose smallest eigenvalue exceeds tol.
bool in_identified_set(const PartialCovariance& partial, const Matrix& yz,
                       double tol = 0.0);

struct CompletionOptions {
  int max_iter = 500;
  double rel_tol = 1e-9;
  std::uint64_t seed = 0;          // drives the soft-impute holdout mask
  int max_rank = 0;                // 0 = uncapped soft-thresholded rank
  double holdout_fraction = 0.10;  // observed entries held out for lambda choice
  int lambda_grid_size = 20;
  double lambda_min_ratio = 1e-3;

  void validate() const;
};

/// Stacked data matrix with the file-matching missing blocks replaced by a
/// completion estimate. Rows 0..n_a-1 come from dataset A, the rest from B;
/// observed entries are copied through untouched.
struct ImputedDataset {
  Matrix data;  // n x p, columns ordered (X, Y, Z)
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> imputed;  // n x p mask
  PartitionSpec partition;
  int n_a = 0;
  int n_b = 0;
  std::string method_tag;
  double objective = 0.0;  // half the squared residual on observed entries
  std::vector<double> objective_trace;
  bool converged = false;
  // soft-impute diagnostics
  double selected_lambda = 0.0;
  std::vector<double> lambda_grid;
  std::vector<double> lambda_train_objective;
  std::vector<double> lambda_holdout_rmse;
};

/// Alternating least squares on the observed entries of the stacked matrix
/// at fixed rank q. data_a columns are (X, Y), data_b columns are (X, Z).
ImputedDataset als_complete(const Matrix& data_a, const Matrix& data_b,
                            const PartitionSpec& partition, int q,
                            const CompletionOptions& opts = {});

/// Soft-thresholded low-rank completion with warm starts across a decreasing
/// lambda grid; lambda picked by held-out observed-entry error, then refit on
/// all observed entries. An empty grid selects lambda_grid_size log-spaced
/// values from the spectral norm of the zero-filled matrix down to
/// lambda_min_ratio times it.
ImputedDataset soft_impute(const Matrix& data_a, const Matrix& data_b,
                           const PartitionSpec& partition,
                           std::vector<double> lambda_grid = {},
                           const CompletionOptions& opts = {});

/// Iterative rank-q SVD on the mean-filled stacked matrix.
ImputedDataset svd_impute(const Matrix& data_a, const Matrix& data_b,
                          const PartitionSpec& partition, int q,
                          const CompletionOptions& opts = {});

/// Cross-covariance of the stacked (partially imputed) Y and Z columns,
/// centered by their stacked means, denominator n.
Matrix covariance_from_imputed(const ImputedDataset& imputed);

}  // namespace fmatch
