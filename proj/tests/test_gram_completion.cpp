#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fmatch/errors.hpp"
#include "fmatch/gram_completion.hpp"
#include "fmatch/rng.hpp"
#include "fmatch/types.hpp"

#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <stdexcept>

using fmatch::Matrix;
using fmatch::PartialCovariance;
using fmatch::PartitionSpec;
using fmatch::Vector;

namespace {

Matrix gaussian_matrix(fmatch::Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

Matrix random_orthogonal(fmatch::Rng& rng, int q) {
  const Matrix g = gaussian_matrix(rng, q, q);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(q, q);
}

// Gram blocks of a zero-uniqueness factor model, with the YZ block removed.
PartialCovariance gram_blocks(const Matrix& loadings, int px, int py, int pz) {
  fmatch::FactorModel m;
  m.partition.p_x = px;
  m.partition.p_y = py;
  m.partition.p_z = pz;
  m.loadings = loadings;
  m.uniquenesses = Vector::Zero(px + py + pz);
  PartialCovariance out = fmatch::implied_covariance(m);
  out.yz.reset();
  return out;
}

}  // namespace

TEST_CASE("top factors of a rank-one gram") {
  Matrix v(2, 1);
  v << 1, 2;
  const Matrix gram = v * v.transpose();

  const auto [factors, eigenvalues] = fmatch::top_q_factors(gram, 1);
  CHECK(eigenvalues.size() == 1);
  CHECK(eigenvalues(0) == doctest::Approx(5.0));
  const double sign = factors(0, 0) > 0 ? 1.0 : -1.0;
  CHECK((factors * sign - v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("top factors of the identity") {
  const auto [factors, eigenvalues] = fmatch::top_q_factors(Matrix::Identity(3, 3), 3);
  CHECK((eigenvalues.array() - 1.0).abs().maxCoeff() < 1e-14);
  const Matrix rec = factors * factors.transpose();
  CHECK((rec - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("top factors reconstruct a low-rank gram") {
  fmatch::Rng rng(101);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix lambda = gaussian_matrix(rng, 8, 3);
    const Matrix gram = lambda * lambda.transpose();
    const auto [factors, eigenvalues] = fmatch::top_q_factors(gram, 3);
    CHECK((factors * factors.transpose() - gram).norm() < 1e-10);
    CHECK(eigenvalues(0) >= eigenvalues(1));
    CHECK(eigenvalues(1) >= eigenvalues(2));
    CHECK(eigenvalues(2) > 0);
  }
}

TEST_CASE("top factors rejects bad input") {
  fmatch::Rng rng(7);
  const Matrix lambda = gaussian_matrix(rng, 5, 2);
  const Matrix gram = lambda * lambda.transpose();
  CHECK_THROWS_AS(fmatch::top_q_factors(gram, 3), fmatch::RankDeficientError);

  CHECK_THROWS_AS(fmatch::top_q_factors(-Matrix::Identity(3, 3), 1),
                  std::invalid_argument);

  Matrix asym = gram;
  asym(0, 1) += 1.0;
  CHECK_THROWS_AS(fmatch::top_q_factors(asym, 2), std::invalid_argument);

  CHECK_THROWS_AS(fmatch::top_q_factors(gram, 0), std::invalid_argument);
  CHECK_THROWS_AS(fmatch::top_q_factors(Matrix::Zero(2, 3), 1),
                  std::invalid_argument);
}

TEST_CASE("procrustes reflection case") {
  Matrix target(2, 1), source(2, 1);
  target << 1, 0;
  source << -1, 0;
  const Matrix r = fmatch::procrustes_align(target, source);
  CHECK(r.rows() == 1);
  CHECK(r(0, 0) == doctest::Approx(-1.0));
}

TEST_CASE("procrustes recovers a planted rotation") {
  fmatch::Rng rng(13);
  for (int rep = 0; rep < 30; ++rep) {
    const int q = 1 + rng.uniform_int(4);
    const int m = q + 1 + rng.uniform_int(5);
    const Matrix target = gaussian_matrix(rng, m, q);
    const Matrix r0 = random_orthogonal(rng, q);
    const Matrix source = target * r0.transpose();

    const Matrix r = fmatch::procrustes_align(target, source);
    CHECK((r - r0).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((source * r - target).norm() < 1e-9);
  }
}

TEST_CASE("procrustes output is orthogonal with unit determinant magnitude") {
  fmatch::Rng rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    const int q = 1 + rng.uniform_int(3);
    const int m = q + rng.uniform_int(4);
    const Matrix target = gaussian_matrix(rng, m, q);
    const Matrix source = gaussian_matrix(rng, m, q);
    const Matrix r = fmatch::procrustes_align(target, source);
    CHECK((r.transpose() * r - Matrix::Identity(q, q)).norm() < 1e-12);
    CHECK(std::abs(std::abs(r.determinant()) - 1.0) < 1e-10);
  }
}

TEST_CASE("procrustes beats a brute-force rotation grid") {
  fmatch::Rng rng(19);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix target = gaussian_matrix(rng, 5, 2);
    const Matrix source = gaussian_matrix(rng, 5, 2);
    const Matrix r = fmatch::procrustes_align(target, source);
    const double achieved = (source * r - target).norm();

    double best = std::numeric_limits<double>::infinity();
    const int steps = 3600;
    for (int k = 0; k < steps; ++k) {
      const double angle = 2.0 * 3.14159265358979323846 * k / steps;
      Matrix rot(2, 2);
      rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
      best = std::min(best, (source * rot - target).norm());
      Matrix reflect = rot;
      reflect.col(1) = -reflect.col(1);
      best = std::min(best, (source * reflect - target).norm());
    }
    CHECK(achieved <= best + 1e-6);
    CHECK(best <= achieved + 1e-2);  // the grid comes close to the optimum
  }
}

TEST_CASE("procrustes rejects degenerate cross products") {
  Matrix target(3, 2), source(3, 2);
  target << 1, 0, 0, 1, 0, 0;
  source.setZero();
  CHECK_THROWS_AS(fmatch::procrustes_align(target, source),
                  fmatch::RankDeficientError);
  CHECK_THROWS_AS(fmatch::procrustes_align(target, Matrix::Zero(2, 2)),
                  std::invalid_argument);
}

TEST_CASE("scalar gram completion") {
  Matrix lambda(3, 1);
  lambda << 1, 2, 3;
  const PartialCovariance blocks = gram_blocks(lambda, 1, 1, 1);
  const Matrix yz = fmatch::complete_gram(blocks, 1);
  CHECK(yz.rows() == 1);
  CHECK(yz(0, 0) == doctest::Approx(6.0).epsilon(1e-10));
}

TEST_CASE("zero A-side loadings give a zero cross block") {
  fmatch::Rng rng(23);
  Matrix lambda = gaussian_matrix(rng, 6, 2);
  lambda.middleRows(2, 2).setZero();  // the Y block
  const PartialCovariance blocks = gram_blocks(lambda, 2, 2, 2);
  const Matrix yz = fmatch::complete_gram(blocks, 2);
  CHECK(yz.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("random gram completion example") {
  fmatch::Rng rng(29);
  const Matrix lambda = gaussian_matrix(rng, 12, 2);
  const PartialCovariance blocks = gram_blocks(lambda, 4, 3, 5);
  const Matrix truth =
      lambda.middleRows(4, 3) * lambda.bottomRows(5).transpose();
  const Matrix yz = fmatch::complete_gram(blocks, 2);
  CHECK((yz - truth).norm() < 1e-9);
}

TEST_CASE("exact recovery across random designs") {
  fmatch::Rng rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    const int q = 1 + rng.uniform_int(3);
    const int px = q + rng.uniform_int(4);
    const int py = 1 + rng.uniform_int(4);
    const int pz = 1 + rng.uniform_int(4);
    const Matrix lambda = gaussian_matrix(rng, px + py + pz, q);
    const PartialCovariance blocks = gram_blocks(lambda, px, py, pz);
    const Matrix truth = lambda.middleRows(px, py) *
                         lambda.bottomRows(pz).transpose();
    const Matrix yz = fmatch::complete_gram(blocks, q);
    CHECK((yz - truth).norm() < 1e-9);
  }
}

TEST_CASE("completion is invariant to re-rotated canonical factors") {
  fmatch::Rng rng(37);
  for (int rep = 0; rep < 20; ++rep) {
    const int q = 1 + rng.uniform_int(2);
    const int px = q + 1, py = 2, pz = 3;
    const Matrix lambda = gaussian_matrix(rng, px + py + pz, q);
    const PartialCovariance blocks = gram_blocks(lambda, px, py, pz);
    const Matrix reference = fmatch::complete_gram(blocks, q);

    // Re-rotate both canonical factor sets by arbitrary orthogonal matrices
    // and run the alignment pipeline by hand; the output must not move.
    const fmatch::CanonicalFactors canon = fmatch::canonical_factors(blocks, q);
    const Matrix qa = random_orthogonal(rng, q);
    const Matrix qb = random_orthogonal(rng, q);
    const Matrix fa = canon.factors_a * qa;
    const Matrix fb = canon.factors_b * qb;
    const Matrix rot = fmatch::procrustes_align(fa.topRows(px), fb.topRows(px));
    const Matrix rec = fa.bottomRows(py) * (fb.bottomRows(pz) * rot).transpose();
    CHECK((rec - reference).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("repeated eigenvalues are absorbed by the alignment") {
  // Loadings whose X block is a scaled identity: the A- and B-side
  // eigendecompositions are free to pick any basis of the repeated eigenspace.
  const int q = 2;
  Matrix lambda(q + 4, q);
  lambda.setZero();
  lambda.topRows(q) = 2.0 * Matrix::Identity(q, q);
  lambda.middleRows(q, 2) << 1, -1, 0.5, 2;
  lambda.bottomRows(2) << -3, 1, 2, 0.25;
  const PartialCovariance blocks = gram_blocks(lambda, q, 2, 2);
  const Matrix truth =
      lambda.middleRows(q, 2) * lambda.bottomRows(2).transpose();
  CHECK((fmatch::complete_gram(blocks, q) - truth).norm() < 1e-9);
}

TEST_CASE("completion propagates rank failures") {
  fmatch::Rng rng(41);
  Matrix lambda = gaussian_matrix(rng, 7, 2);
  lambda.topRows(3).col(1) = lambda.topRows(3).col(0);  // X block rank 1
  const PartialCovariance blocks = gram_blocks(lambda, 3, 2, 2);
  CHECK_THROWS_AS(fmatch::complete_gram(blocks, 2), fmatch::RankDeficientError);
}
