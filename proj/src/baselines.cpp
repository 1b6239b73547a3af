#include "fmatch/baselines.hpp"

#include "fmatch/errors.hpp"
#include "fmatch/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace fmatch {

void CompletionOptions::validate() const {
  if (max_iter < 1) throw std::invalid_argument("CompletionOptions: max_iter >= 1");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("CompletionOptions: rel_tol > 0");
  if (max_rank < 0) throw std::invalid_argument("CompletionOptions: max_rank >= 0");
  if (!(holdout_fraction >= 0.0 && holdout_fraction <= 0.5))
    throw std::invalid_argument("CompletionOptions: holdout_fraction in [0, 0.5]");
  if (lambda_grid_size < 1)
    throw std::invalid_argument("CompletionOptions: lambda_grid_size >= 1");
  if (!(lambda_min_ratio > 0.0 && lambda_min_ratio <= 1.0))
    throw std::invalid_argument("CompletionOptions: lambda_min_ratio in (0, 1]");
}

Matrix cia_estimate(const PartialCovariance& partial) {
  partial.validate();
  Eigen::LLT<Matrix> llt(partial.xx);
  if (llt.info() != Eigen::Success)
    throw SingularCovarianceError("cia_estimate: XX block not positive definite");
  return partial.xy.transpose() * llt.solve(partial.xz);
}

bool in_identified_set(const PartialCovariance& partial, const Matrix& yz,
                       double tol) {
  partial.validate();
  Matrix full = assemble_full(partial, yz);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(full, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) return false;
  return eig.eigenvalues().minCoeff() > tol;
}

namespace {

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Stacked {
  Matrix data;        // n x p, missing entries zero
  BoolArray observed; // n x p
  int n_a = 0;
  int n_b = 0;
};

Stacked stack_pair(const Matrix& data_a, const Matrix& data_b,
                   const PartitionSpec& part) {
  part.validate();
  if (data_a.cols() != part.p_a())
    throw std::invalid_argument("completion: dataset A must have p_X+p_Y columns");
  if (data_b.cols() != part.p_b())
    throw std::invalid_argument("completion: dataset B must have p_X+p_Z columns");
  if (data_a.rows() < 1 || data_b.rows() < 1)
    throw std::invalid_argument("completion: datasets must be non-empty");

  Stacked st;
  st.n_a = static_cast<int>(data_a.rows());
  st.n_b = static_cast<int>(data_b.rows());
  const int n = st.n_a + st.n_b;
  st.data = Matrix::Zero(n, part.p());
  st.observed = BoolArray::Constant(n, part.p(), false);

  st.data.topLeftCorner(st.n_a, part.p_a()) = data_a;
  st.observed.topLeftCorner(st.n_a, part.p_a()).setConstant(true);
  st.data.bottomLeftCorner(st.n_b, part.p_x) = data_b.leftCols(part.p_x);
  st.observed.bottomLeftCorner(st.n_b, part.p_x).setConstant(true);
  st.data.bottomRightCorner(st.n_b, part.p_z) = data_b.rightCols(part.p_z);
  st.observed.bottomRightCorner(st.n_b, part.p_z).setConstant(true);
  return st;
}

Matrix mean_filled(const Stacked& st) {
  Matrix filled = st.data;
  for (int j = 0; j < filled.cols(); ++j) {
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < filled.rows(); ++i)
      if (st.observed(i, j)) {
        sum += filled(i, j);
        ++count;
      }
    const double mean = count > 0 ? sum / count : 0.0;
    for (int i = 0; i < filled.rows(); ++i)
      if (!st.observed(i, j)) filled(i, j) = mean;
  }
  return filled;
}

Matrix solve_normal(const Matrix& gram, const Matrix& rhs, const char* what) {
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success)
    throw SingularSubproblemError(std::string(what) + ": decomposition failed");
  const Vector d = ldlt.vectorD();
  if (!(d.minCoeff() > 1e-14 * d.maxCoeff()) || !(d.maxCoeff() > 0.0))
    throw SingularSubproblemError(std::string(what) +
                                  ": least-squares system rank deficient");
  return ldlt.solve(rhs);
}

double observed_objective(const Stacked& st, const Matrix& estimate) {
  double f = 0.0;
  for (int j = 0; j < st.data.cols(); ++j)
    for (int i = 0; i < st.data.rows(); ++i)
      if (st.observed(i, j)) {
        const double r = st.data(i, j) - estimate(i, j);
        f += r * r;
      }
  return 0.5 * f;
}

ImputedDataset make_result(const Stacked& st, const PartitionSpec& part,
                           const Matrix& estimate, std::string tag) {
  ImputedDataset out;
  out.partition = part;
  out.n_a = st.n_a;
  out.n_b = st.n_b;
  out.method_tag = std::move(tag);
  out.data = st.observed.select(st.data, estimate);
  out.imputed = !st.observed;
  return out;
}

}  // namespace

ImputedDataset als_complete(const Matrix& data_a, const Matrix& data_b,
                            const PartitionSpec& partition, int q,
                            const CompletionOptions& opts) {
  opts.validate();
  Stacked st = stack_pair(data_a, data_b, partition);
  const int n = st.n_a + st.n_b;
  const int p = partition.p();
  const int p_x = partition.p_x, p_y = partition.p_y, p_z = partition.p_z;
  const int p_a = partition.p_a(), p_b = partition.p_b();
  if (q < 1 || q > std::min(n, p))
    throw std::invalid_argument("als_complete: require 1 <= q <= min(n, p)");

  Matrix filled = mean_filled(st);
  Eigen::BDCSVD<Matrix> init_svd(filled, Eigen::ComputeThinV);
  Matrix h = init_svd.matrixV().leftCols(q).transpose();  // q x p

  Matrix g_a, g_b;
  std::vector<double> trace;
  bool converged = false;
  double prev = std::numeric_limits<double>::infinity();
  // Floor keeps the relative test meaningful once the fit is exact and the
  // objective sits in rounding noise.
  const double obj_floor =
      1e-12 * 0.5 * (data_a.squaredNorm() + data_b.squaredNorm());

  Matrix stacked_x(n, p_x);
  stacked_x.topRows(st.n_a) = data_a.leftCols(p_x);
  stacked_x.bottomRows(st.n_b) = data_b.leftCols(p_x);

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    // row factors, one shared normal system per dataset
    Matrix h_a = h.leftCols(p_a);  // q x p_A
    Matrix h_b(q, p_b);
    h_b.leftCols(p_x) = h.leftCols(p_x);
    h_b.rightCols(p_z) = h.rightCols(p_z);
    g_a = solve_normal(h_a * h_a.transpose(), h_a * data_a.transpose(),
                       "als_complete row step A")
              .transpose();  // n_A x q
    g_b = solve_normal(h_b * h_b.transpose(), h_b * data_b.transpose(),
                       "als_complete row step B")
              .transpose();  // n_B x q

    // column factors, grouped by observation pattern
    Matrix gram_a = g_a.transpose() * g_a;
    Matrix gram_b = g_b.transpose() * g_b;
    Matrix gtx = g_a.transpose() * stacked_x.topRows(st.n_a) +
                 g_b.transpose() * stacked_x.bottomRows(st.n_b);
    h.leftCols(p_x) = solve_normal(gram_a + gram_b, gtx, "als_complete column step X");
    h.middleCols(p_x, p_y) = solve_normal(
        gram_a, g_a.transpose() * data_a.rightCols(p_y), "als_complete column step Y");
    h.rightCols(p_z) = solve_normal(
        gram_b, g_b.transpose() * data_b.rightCols(p_z), "als_complete column step Z");

    Matrix h_a_new = h.leftCols(p_a);
    Matrix h_b_new(q, p_b);
    h_b_new.leftCols(p_x) = h.leftCols(p_x);
    h_b_new.rightCols(p_z) = h.rightCols(p_z);
    const double f = 0.5 * ((data_a - g_a * h_a_new).squaredNorm() +
                            (data_b - g_b * h_b_new).squaredNorm());
    trace.push_back(f);
    if (iter > 0 &&
        std::abs(prev - f) <= opts.rel_tol * std::max(std::abs(prev), obj_floor)) {
      converged = true;
      break;
    }
    prev = f;
  }

  Matrix estimate(n, p);
  estimate.topRows(st.n_a) = g_a * h;
  estimate.bottomRows(st.n_b) = g_b * h;
  ImputedDataset out = make_result(st, partition, estimate, "als");
  out.objective = trace.empty() ? 0.0 : trace.back();
  out.objective_trace = std::move(trace);
  out.converged = converged;
  return out;
}

namespace {

// One soft-thresholded SVD pass: replace fit-mask entries by the data,
// shrink singular values by lambda, optionally cap the rank.
Matrix svt_step(const Matrix& work, double lambda, int max_rank) {
  Eigen::BDCSVD<Matrix> svd(work, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector s = (svd.singularValues().array() - lambda).max(0.0).matrix();
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > 0.0) ++rank;
  if (max_rank > 0) rank = std::min(rank, max_rank);
  if (rank == 0) return Matrix::Zero(work.rows(), work.cols());
  return svd.matrixU().leftCols(rank) * s.head(rank).asDiagonal() *
         svd.matrixV().leftCols(rank).transpose();
}

// Iterates M <- SVT(data on mask, M elsewhere) to (approximate) convergence.
bool soft_impute_at(const Stacked& st, const BoolArray& fit_mask, double lambda,
                    int max_rank, int max_iter, double rel_tol, Matrix& m) {
  for (int iter = 0; iter < max_iter; ++iter) {
    Matrix work = fit_mask.select(st.data, m);
    Matrix next = svt_step(work, lambda, max_rank);
    const double delta = (next - m).norm();
    const double scale = m.norm();
    m = std::move(next);
    if (delta <= rel_tol * (scale + 1e-300) || (delta == 0.0)) return true;
  }
  return false;
}

}  // namespace

ImputedDataset soft_impute(const Matrix& data_a, const Matrix& data_b,
                           const PartitionSpec& partition,
                           std::vector<double> lambda_grid,
                           const CompletionOptions& opts) {
  opts.validate();
  Stacked st = stack_pair(data_a, data_b, partition);
  const int n = st.n_a + st.n_b;
  const int p = partition.p();

  if (lambda_grid.empty()) {
    const double lambda_max = Eigen::BDCSVD<Matrix>(st.data).singularValues()(0);
    const int g = opts.lambda_grid_size;
    for (int i = 0; i < g; ++i) {
      const double t = g == 1 ? 0.0 : static_cast<double>(i) / (g - 1);
      lambda_grid.push_back(lambda_max * std::pow(opts.lambda_min_ratio, t));
    }
  }
  std::sort(lambda_grid.begin(), lambda_grid.end(), std::greater<double>());

  // held-out observed entries for picking lambda
  std::vector<std::pair<int, int>> holdout;
  BoolArray fit_mask = st.observed;
  if (opts.holdout_fraction > 0.0) {
    std::vector<std::pair<int, int>> cells;
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < n; ++i)
        if (st.observed(i, j)) cells.emplace_back(i, j);
    const auto k = static_cast<std::size_t>(
        std::llround(opts.holdout_fraction * static_cast<double>(cells.size())));
    Rng rng = Rng::substream(opts.seed, 0);
    rng.shuffle(cells);
    holdout.assign(cells.begin(), cells.begin() + std::min(k, cells.size()));
    for (const auto& [i, j] : holdout) fit_mask(i, j) = false;
  }

  Matrix m = Matrix::Zero(n, p);
  Matrix best_m;
  std::size_t best_idx = 0;
  double best_rmse = std::numeric_limits<double>::infinity();
  std::vector<double> train_objective, holdout_rmse;
  bool last_converged = false;

  for (std::size_t gi = 0; gi < lambda_grid.size(); ++gi) {
    last_converged = soft_impute_at(st, fit_mask, lambda_grid[gi],
                                    opts.max_rank, opts.max_iter,
                                    opts.rel_tol, m);
    train_objective.push_back(observed_objective(st, m));
    if (!holdout.empty()) {
      double sq = 0.0;
      for (const auto& [i, j] : holdout) {
        const double r = st.data(i, j) - m(i, j);
        sq += r * r;
      }
      const double rmse = std::sqrt(sq / static_cast<double>(holdout.size()));
      holdout_rmse.push_back(rmse);
      if (rmse < best_rmse) {
        best_rmse = rmse;
        best_idx = gi;
        best_m = m;
      }
    }
  }

  double selected = lambda_grid.back();
  if (!holdout.empty()) {
    selected = lambda_grid[best_idx];
    m = std::move(best_m);
    last_converged = soft_impute_at(st, st.observed, selected, opts.max_rank,
                                    opts.max_iter, opts.rel_tol, m);
  }

  ImputedDataset out = make_result(st, partition, m, "softimpute");
  out.objective = observed_objective(st, m);
  out.converged = last_converged;
  out.selected_lambda = selected;
  out.lambda_grid = std::move(lambda_grid);
  out.lambda_train_objective = std::move(train_objective);
  out.lambda_holdout_rmse = std::move(holdout_rmse);
  return out;
}

ImputedDataset svd_impute(const Matrix& data_a, const Matrix& data_b,
                          const PartitionSpec& partition, int q,
                          const CompletionOptions& opts) {
  opts.validate();
  Stacked st = stack_pair(data_a, data_b, partition);
  const int n = st.n_a + st.n_b;
  const int p = partition.p();
  if (q < 1 || q > std::min(n, p))
    throw std::invalid_argument("svd_impute: require 1 <= q <= min(n, p)");

  Matrix filled = mean_filled(st);
  Matrix m;
  std::vector<double> trace;
  bool converged = false;
  double prev = std::numeric_limits<double>::infinity();
  const double obj_floor =
      1e-12 * 0.5 * (data_a.squaredNorm() + data_b.squaredNorm());

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    Eigen::BDCSVD<Matrix> svd(filled, Eigen::ComputeThinU | Eigen::ComputeThinV);
    m = svd.matrixU().leftCols(q) *
        svd.singularValues().head(q).asDiagonal() *
        svd.matrixV().leftCols(q).transpose();
    const double f = observed_objective(st, m);
    trace.push_back(f);
    filled = st.observed.select(st.data, m);
    if (iter > 0 &&
        std::abs(prev - f) <= opts.rel_tol * std::max(std::abs(prev), obj_floor)) {
      converged = true;
      break;
    }
    prev = f;
  }

  ImputedDataset out = make_result(st, partition, m, "svdimpute");
  out.objective = trace.empty() ? 0.0 : trace.back();
  out.objective_trace = std::move(trace);
  out.converged = converged;
  return out;
}

Matrix covariance_from_imputed(const ImputedDataset& imputed) {
  imputed.partition.validate();
  const int n = imputed.n_a + imputed.n_b;
  if (imputed.data.rows() != n || imputed.data.cols() != imputed.partition.p())
    throw std::invalid_argument("covariance_from_imputed: shape mismatch");
  Matrix y = imputed.data.middleCols(imputed.partition.y_offset(),
                                     imputed.partition.p_y);
  Matrix z = imputed.data.rightCols(imputed.partition.p_z);
  y.rowwise() -= y.colwise().mean();
  z.rowwise() -= z.colwise().mean();
  return y.transpose() * z / static_cast<double>(n);
}

}  // namespace fmatch
