#include "fmatch/gram_completion.hpp"

#include "fmatch/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>

namespace fmatch {

std::pair<Matrix, Vector> top_q_factors(const Matrix& gram, int q,
                                        double tol) {
  if (gram.rows() != gram.cols())
    throw std::invalid_argument("top_q_factors: matrix must be square");
  const int m = static_cast<int>(gram.rows());
  if (q < 1 || q > m)
    throw std::invalid_argument("top_q_factors: require 1 <= q <= rows");
  if (!gram.isApprox(gram.transpose(), 1e-10))
    throw std::invalid_argument("top_q_factors: matrix must be symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success)
    throw NonFiniteError("top_q_factors: eigendecomposition failed");
  Vector evals = eig.eigenvalues();  // ascending
  if (tol < 0) tol = 1e-8 * evals.cwiseAbs().maxCoeff();

  if (evals(0) < -tol)
    throw std::invalid_argument(
        "top_q_factors: matrix is not PSD within tolerance");
  evals = evals.cwiseMax(0.0);

  if (evals(m - q) <= tol)
    throw RankDeficientError("top_q_factors: fewer than " +
                             std::to_string(q) +
                             " eigenvalues exceed tolerance");

  Matrix factors(m, q);
  Vector top(q);
  for (int j = 0; j < q; ++j) {
    const int src = m - 1 - j;  // reverse to nonincreasing order
    top(j) = evals(src);
    factors.col(j) = eig.eigenvectors().col(src) * std::sqrt(evals(src));
  }
  return {std::move(factors), std::move(top)};
}

Matrix procrustes_align(const Matrix& target, const Matrix& source,
                        double tol) {
  if (target.rows() != source.rows() || target.cols() != source.cols())
    throw std::invalid_argument("procrustes_align: shape mismatch");
  if (target.cols() < 1)
    throw std::invalid_argument("procrustes_align: empty factor matrices");

  Matrix m = source.transpose() * target;
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  if (tol < 0) tol = 1e-8 * sv(0);
  if (sv(0) <= 0.0 || sv(sv.size() - 1) <= tol)
    throw RankDeficientError(
        "procrustes_align: cross-product is rank deficient, alignment "
        "non-unique");
  return svd.matrixU() * svd.matrixV().transpose();
}

CanonicalFactors canonical_factors(const PartialCovariance& observed, int q,
                                   double tol) {
  observed.validate();
  auto [fa, ea] = top_q_factors(observed.marginal_a(), q, tol);
  auto [fb, eb] = top_q_factors(observed.marginal_b(), q, tol);
  return {std::move(fa), std::move(fb), std::move(ea), std::move(eb)};
}

Matrix complete_gram(const PartialCovariance& observed, int q, double tol) {
  CanonicalFactors cf = canonical_factors(observed, q, tol);
  const int p_x = observed.partition.p_x;
  const int p_y = observed.partition.p_y;
  const int p_z = observed.partition.p_z;

  Matrix lambda_x_a = cf.factors_a.topRows(p_x);
  Matrix lambda_y_a = cf.factors_a.bottomRows(p_y);
  Matrix lambda_x_b = cf.factors_b.topRows(p_x);
  Matrix lambda_z_b = cf.factors_b.bottomRows(p_z);

  Matrix rot = procrustes_align(lambda_x_a, lambda_x_b, tol);
  return lambda_y_a * (lambda_z_b * rot).transpose();
}

}  // namespace fmatch
