#pragma once

#include "fmatch/types.hpp"

#include <optional>

namespace fmatch {

/// Degrees of freedom of the complete-case factor model,
/// C = [(p-q)^2 - p - q] / 2. The numerator is always even, so the value is
/// an exact integer: (p-q)(p-q-1)/2 - q.
/// Throws std::invalid_argument unless 0 <= q < p.
long long dof_complete(int p, int q);

/// File-matching degrees of freedom, C_M = C - p_Y * p_Z.
long long dof_matching(int p_x, int p_y, int p_z, int q);

enum class MaxFactorsCriterion {
  CompleteDof,  // largest q with C >= 0
  MatchingDof,  // largest q with C_M >= 0
  Assumption2,  // largest q with q <= p_X, q < (p_X+p_Y)/2, q < (p_X+p_Z)/2
};

/// Largest admissible factor count q >= 0 under the chosen criterion.
int max_factors(int p_x, int p_y, int p_z, MaxFactorsCriterion criterion);

/// Dimension form of Assumption 1: q <= p_X.
bool assumption1_dims_ok(int p_x, int q);

/// Dimension form of Assumption 2: q < (p_X+p_Y)/2 and q < (p_X+p_Z)/2.
bool assumption2_dims_ok(int p_x, int p_y, int p_z, int q);

/// Numerical rank-q check on a loadings block: smallest of the top q singular
/// values must exceed tol. tol < 0 selects the default
/// 1e-8 * (largest singular value).
bool check_assumption1_numeric(const Matrix& lambda_x, int q, double tol = -1.0);

/// Row-deletion / disjoint-submatrix test on a marginal loadings matrix:
/// true iff for every single row deleted there remain two disjoint q-row
/// subsets whose submatrices both have smallest singular value > tol.
/// Exhaustive search with early exit. Matrices with fewer than 2q+1 rows
/// return false; matrices with more than 25 rows are not checked (nullopt).
/// tol < 0 selects 1e-8 * (largest singular value of the full matrix).
std::optional<bool> check_assumption2_numeric(const Matrix& lambda_block,
                                              double tol = -1.0);

struct IdentifiabilityReport {
  int q = 0;
  bool assumption1_dim_ok = false;
  bool assumption2_dim_ok = false;
  long long dof_complete = 0;  // C
  long long dof_matching = 0;  // C_M
  std::optional<bool> numeric_assumption1;
  std::optional<bool> numeric_assumption2;
};

/// Dimension-only assessment for a candidate q.
IdentifiabilityReport assess_identifiability(const PartitionSpec& partition, int q);

/// Assessment at a fitted model, adding the numeric rank checks on the
/// estimated loadings (Assumption 2 on both marginal blocks).
IdentifiabilityReport assess_identifiability(const FactorModel& model,
                                             double tol = -1.0);

}  // namespace fmatch
