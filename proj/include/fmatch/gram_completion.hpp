#pragma once

#include "fmatch/types.hpp"

#include <utility>

namespace fmatch {

/// Marginal factors in the canonical (eigenvector) rotation: factors_a
/// reproduces the A-side Gram assembly as factors_a * factors_a^T, likewise
/// factors_b for the B side.
struct CanonicalFactors {
  Matrix factors_a;      // (p_X+p_Y) x q
  Matrix factors_b;      // (p_X+p_Z) x q
  Vector eigenvalues_a;  // length q, nonincreasing
  Vector eigenvalues_b;
};

/// Top-q eigenpairs of a symmetric PSD matrix, returned as V * D^{1/2} plus
/// the eigenvalues (nonincreasing). Eigenvalues in (-tol, 0) are clipped to
/// zero; an eigenvalue below -tol means the matrix is not PSD within
/// tolerance and is rejected. Throws RankDeficientError when fewer than q
/// eigenvalues exceed tol. tol < 0 selects 1e-8 * (largest |eigenvalue|).
std::pair<Matrix, Vector> top_q_factors(const Matrix& gram, int q,
                                        double tol = -1.0);

/// Orthogonal matrix R minimizing ||target - source * R||_F, via the SVD
/// source^T * target = W D Q^T, R = W Q^T. Throws RankDeficientError when a
/// singular value of source^T * target falls below tol (alignment would be
/// non-unique). tol < 0 selects 1e-8 * (largest singular value).
Matrix procrustes_align(const Matrix& target, const Matrix& source,
                        double tol = -1.0);

/// Eigendecomposition of the two marginal Gram assemblies of a partially
/// observed Gram matrix (blocks XX, XY, YY on the A side; XX, XZ, ZZ on B).
CanonicalFactors canonical_factors(const PartialCovariance& observed, int q,
                                   double tol = -1.0);

/// Constructive completion of the unobserved YZ block of a rank-q Gram
/// matrix: aligns the two marginal factor sets through the shared X rows and
/// returns Lambda_Y * Lambda_Z^T. Exact when the observed blocks are exactly
/// rank q and the XX block alone has rank q.
Matrix complete_gram(const PartialCovariance& observed, int q,
                     double tol = -1.0);

}  // namespace fmatch
