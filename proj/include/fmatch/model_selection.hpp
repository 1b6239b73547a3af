#pragma once

#include "fmatch/em.hpp"
#include "fmatch/types.hpp"

#include <string>
#include <vector>

namespace fmatch {

struct BICRow {
  int q = 0;
  double loglik = 0.0;
  long long free_params = 0;
  double bic = 0.0;
  bool feasible_c = false;   // complete-case dof >= 0
  bool feasible_cm = false;  // file-matching dof >= 0
  bool feasible_a2 = false;  // rank/row-deletion dimension bounds
  bool converged = false;
  bool failed = false;
  std::string error;
  int iterations = 0;
  bool trace_monotone = true;
  double worst_trace_step = 0.0;
};

struct BICTable {
  std::vector<BICRow> rows;
  int selected_q = -1;  // -1 when every row failed

  /// Columns: q, loglik, free_params, bic, feasible_C, feasible_CM,
  /// feasible_A2, selected. Failed rows carry nan in the value columns.
  std::string to_csv() const;
};

/// Count of free parameters of a q-factor model on p variables,
/// q*p + p - q(q-1)/2.
long long free_parameters(int p, int q);

/// -2*loglik + free_parameters(p, q) * log(n).
double bic_complete(double loglik, int p, int q, double n);

/// Fits every q in [q_min, q_max] on the half-observed scatters and scores
/// each by BIC with n = n_A + n_B. The smallest-BIC row wins, ties broken
/// toward smaller q; failed fits are recorded and skipped. Rows may be fit
/// on up to n_threads threads; output is independent of the thread count.
BICTable select_q(const ObservedScatter& scatter, int q_min, int q_max,
                  const EMConfig& config, int n_threads = 1);

}  // namespace fmatch
