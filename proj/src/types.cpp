#include "fmatch/types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace fmatch {

void PartitionSpec::validate() const {
  if (p_x < 1 || p_y < 1 || p_z < 1) {
    throw std::invalid_argument("PartitionSpec: p_X, p_Y, p_Z must all be >= 1");
  }
  if (!labels.empty()) {
    if (static_cast<int>(labels.size()) != p()) {
      throw std::invalid_argument("PartitionSpec: labels must have length p");
    }
    std::unordered_set<std::string> seen;
    for (const auto& name : labels) {
      if (!seen.insert(name).second) {
        throw std::invalid_argument("PartitionSpec: duplicate label '" + name + "'");
      }
    }
  }
}

void FactorModel::validate() const {
  partition.validate();
  if (loadings.rows() != partition.p()) {
    throw std::invalid_argument("FactorModel: loadings must have p rows");
  }
  if (loadings.cols() < 1) {
    throw std::invalid_argument("FactorModel: factor count q must be >= 1");
  }
  if (uniquenesses.size() != partition.p()) {
    throw std::invalid_argument("FactorModel: uniquenesses must have length p");
  }
  if ((uniquenesses.array() < 0.0).any()) {
    throw std::invalid_argument("FactorModel: uniquenesses must be nonnegative");
  }
  if (!loadings.allFinite() || !uniquenesses.allFinite()) {
    throw std::invalid_argument("FactorModel: parameters must be finite");
  }
}

Matrix symmetrize_from_lower(const Matrix& m) {
  Matrix out = m;
  const Eigen::Index n = m.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      out(i, j) = out(j, i);
    }
  }
  return out;
}

namespace {

void check_symmetry(const Matrix& m, double tol, const char* name) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument(std::string(name) + " must be square");
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * scale) {
    throw std::invalid_argument(std::string(name) + " must be symmetric");
  }
}

// Average with the transpose, then mirror for bit-exact symmetry.
Matrix exact_symmetrize(const Matrix& m) {
  Matrix half = 0.5 * (m + m.transpose());
  return symmetrize_from_lower(half);
}

}  // namespace

ObservedScatter ObservedScatter::create(PartitionSpec partition, Matrix scatter_a,
                                        Matrix scatter_b, double n_a, double n_b,
                                        double sym_tol) {
  partition.validate();
  if (scatter_a.rows() != partition.p_a() || scatter_b.rows() != partition.p_b()) {
    throw std::invalid_argument("ObservedScatter: scatter dimensions do not match partition");
  }
  check_symmetry(scatter_a, sym_tol, "scatter_a");
  check_symmetry(scatter_b, sym_tol, "scatter_b");
  if (!(n_a > 0) || !(n_b > 0)) {
    throw std::invalid_argument("ObservedScatter: need n_A > 0 and n_B > 0");
  }
  ObservedScatter out;
  out.partition = std::move(partition);
  out.scatter_a = exact_symmetrize(scatter_a);
  out.scatter_b = exact_symmetrize(scatter_b);
  out.n_a = n_a;
  out.n_b = n_b;
  return out;
}

void PartialCovariance::validate() const {
  partition.validate();
  const int px = partition.p_x, py = partition.p_y, pz = partition.p_z;
  auto need = [](const Matrix& m, int r, int c, const char* name) {
    if (m.rows() != r || m.cols() != c) {
      throw std::invalid_argument(std::string("PartialCovariance: block ") + name +
                                  " has wrong dimensions");
    }
  };
  need(xx, px, px, "XX");
  need(xy, px, py, "XY");
  need(xz, px, pz, "XZ");
  need(yy, py, py, "YY");
  need(zz, pz, pz, "ZZ");
  if (yz) {
    need(*yz, py, pz, "YZ");
  }
}

Matrix PartialCovariance::marginal_a() const {
  const int px = partition.p_x, py = partition.p_y;
  Matrix out(px + py, px + py);
  out.topLeftCorner(px, px) = xx;
  out.topRightCorner(px, py) = xy;
  out.bottomLeftCorner(py, px) = xy.transpose();
  out.bottomRightCorner(py, py) = yy;
  return out;
}

Matrix PartialCovariance::marginal_b() const {
  const int px = partition.p_x, pz = partition.p_z;
  Matrix out(px + pz, px + pz);
  out.topLeftCorner(px, px) = xx;
  out.topRightCorner(px, pz) = xz;
  out.bottomLeftCorner(pz, px) = xz.transpose();
  out.bottomRightCorner(pz, pz) = zz;
  return out;
}

Matrix implied_sigma(const FactorModel& model) {
  model.validate();
  const int p = model.partition.p();
  Matrix sigma = Matrix::Zero(p, p);
  sigma.selfadjointView<Eigen::Lower>().rankUpdate(model.loadings);
  sigma.diagonal() += model.uniquenesses;
  return symmetrize_from_lower(sigma);
}

PartialCovariance implied_covariance(const FactorModel& model) {
  const Matrix sigma = implied_sigma(model);
  const int px = model.partition.p_x;
  const int py = model.partition.p_y;
  const int pz = model.partition.p_z;
  PartialCovariance out;
  out.partition = model.partition;
  out.xx = sigma.topLeftCorner(px, px);
  out.xy = sigma.block(0, px, px, py);
  out.xz = sigma.block(0, px + py, px, pz);
  out.yy = sigma.block(px, px, py, py);
  out.zz = sigma.block(px + py, px + py, pz, pz);
  out.yz = sigma.block(px, px + py, py, pz);
  return out;
}

Matrix assemble_full(const PartialCovariance& partial, const Matrix& yz) {
  partial.validate();
  const int px = partial.partition.p_x;
  const int py = partial.partition.p_y;
  const int pz = partial.partition.p_z;
  if (yz.rows() != py || yz.cols() != pz) {
    throw std::invalid_argument("assemble_full: YZ block has wrong dimensions");
  }
  const int p = px + py + pz;
  Matrix full(p, p);
  full.topLeftCorner(px, px) = partial.xx;
  full.block(0, px, px, py) = partial.xy;
  full.block(0, px + py, px, pz) = partial.xz;
  full.block(px, 0, py, px) = partial.xy.transpose();
  full.block(px, px, py, py) = partial.yy;
  full.block(px, px + py, py, pz) = yz;
  full.block(px + py, 0, pz, px) = partial.xz.transpose();
  full.block(px + py, px, pz, py) = yz.transpose();
  full.block(px + py, px + py, pz, pz) = partial.zz;
  return full;
}

double FitReport::worst_trace_step() const {
  double worst = 0.0;
  for (std::size_t i = 1; i < loglik_trace.size(); ++i) {
    worst = std::max(worst, loglik_trace[i - 1] - loglik_trace[i]);
  }
  return worst;
}

bool FitReport::trace_monotone(double slack) const {
  return worst_trace_step() <= slack;
}

}  // namespace fmatch
