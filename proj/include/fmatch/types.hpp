#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fmatch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Sizes of the three variable groups in the file-matching pattern:
/// X is shared between both datasets, Y appears only in dataset A,
/// Z only in dataset B. All matrices in this library use the canonical
/// (X, Y, Z) variable order.
struct PartitionSpec {
  int p_x = 0;
  int p_y = 0;
  int p_z = 0;
  std::vector<std::string> labels;  // empty, or one name per variable in (X,Y,Z) order

  int p() const { return p_x + p_y + p_z; }
  int p_a() const { return p_x + p_y; }  // variables observed in dataset A
  int p_b() const { return p_x + p_z; }  // variables observed in dataset B
  int y_offset() const { return p_x; }
  int z_offset() const { return p_x + p_y; }

  /// Throws std::invalid_argument on p_X/p_Y/p_Z < 1 or duplicate labels.
  void validate() const;
};

/// Loadings/uniquenesses pair of a q-factor model. The implied covariance is
/// loadings * loadings^T + diag(uniquenesses).
struct FactorModel {
  PartitionSpec partition;
  Matrix loadings;      // p x q
  Vector uniquenesses;  // length p, entries >= 0

  int q() const { return static_cast<int>(loadings.cols()); }

  Eigen::Block<const Matrix> loadings_x() const {
    return loadings.topRows(partition.p_x);
  }
  Eigen::Block<const Matrix> loadings_y() const {
    return loadings.middleRows(partition.y_offset(), partition.p_y);
  }
  Eigen::Block<const Matrix> loadings_z() const {
    return loadings.bottomRows(partition.p_z);
  }
  /// Stacked loadings of the variables observed in dataset A, (X;Y).
  Eigen::Block<const Matrix> loadings_a() const {
    return loadings.topRows(partition.p_a());
  }

  void validate() const;
};

/// Sufficient statistics of the two files: scatter matrices (sums of outer
/// products of centered rows) and sample counts. scatter_a is over (X,Y),
/// scatter_b over (X,Z). Stored bit-exactly symmetric.
struct ObservedScatter {
  PartitionSpec partition;
  Matrix scatter_a;  // p_A x p_A
  Matrix scatter_b;  // p_B x p_B
  double n_a = 0;
  double n_b = 0;

  double n() const { return n_a + n_b; }

  Eigen::Block<const Matrix> a_xx() const {
    return scatter_a.topLeftCorner(partition.p_x, partition.p_x);
  }
  Eigen::Block<const Matrix> a_xy() const {
    return scatter_a.topRightCorner(partition.p_x, partition.p_y);
  }
  Eigen::Block<const Matrix> a_yy() const {
    return scatter_a.bottomRightCorner(partition.p_y, partition.p_y);
  }
  Eigen::Block<const Matrix> b_xx() const {
    return scatter_b.topLeftCorner(partition.p_x, partition.p_x);
  }
  Eigen::Block<const Matrix> b_xz() const {
    return scatter_b.topRightCorner(partition.p_x, partition.p_z);
  }
  Eigen::Block<const Matrix> b_zz() const {
    return scatter_b.bottomRightCorner(partition.p_z, partition.p_z);
  }

  /// Validates shapes, symmetry (within tol) and n > 0, then stores the
  /// exactly symmetrized scatters.
  static ObservedScatter create(PartitionSpec partition, Matrix scatter_a,
                                Matrix scatter_b, double n_a, double n_b,
                                double sym_tol = 1e-8);
};

/// Block covariance with the YZ block possibly unknown.
struct PartialCovariance {
  PartitionSpec partition;
  Matrix xx;
  Matrix xy;
  Matrix xz;
  Matrix yy;
  Matrix zz;
  std::optional<Matrix> yz;

  void validate() const;

  /// (X,Y) marginal covariance [[xx, xy], [yx, yy]].
  Matrix marginal_a() const;
  /// (X,Z) marginal covariance [[xx, xz], [zx, zz]].
  Matrix marginal_b() const;
};

/// Outcome of an EM fit.
struct FitReport {
  FactorModel model;
  std::vector<double> loglik_trace;  // one entry per EM update of the final run
  int iterations = 0;                // == loglik_trace.size()
  bool converged = false;
  double final_loglik = 0.0;
  std::uint64_t seed = 0;
  int best_restart = 0;  // index of the winning random restart (0 for supplied init)

  /// Largest decrease between consecutive trace entries (0 if none decrease).
  double worst_trace_step() const;
  /// True when the trace is non-decreasing within the given slack per step.
  bool trace_monotone(double slack = 1e-8) const;
};

/// Implied covariance loadings*loadings^T + diag(uniquenesses), partitioned
/// into the nine blocks. The underlying full matrix is built bit-exactly
/// symmetric before slicing.
PartialCovariance implied_covariance(const FactorModel& model);

/// Same as implied_covariance but returning the full p x p matrix.
Matrix implied_sigma(const FactorModel& model);

/// Full p x p symmetric assembly with the candidate YZ block inserted.
/// Throws std::invalid_argument on dimension mismatch.
Matrix assemble_full(const PartialCovariance& partial, const Matrix& yz);

/// Mirrors the lower triangle of the (p x p) matrix into the upper one,
/// returning a bit-exactly symmetric matrix.
Matrix symmetrize_from_lower(const Matrix& m);

}  // namespace fmatch
