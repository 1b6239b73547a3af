#include "fmatch/em.hpp"

#include "fmatch/errors.hpp"
#include "fmatch/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fmatch {

namespace {

constexpr double log_two_pi = 1.8378770664093454835606594728112353;

Eigen::LLT<Matrix> chol_or_throw(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw SingularCovarianceError(std::string(what) +
                                  ": covariance not positive definite");
  return llt;
}

double gaussian_loglik(const Matrix& sigma, const Matrix& scatter, double n,
                       const char* what) {
  auto llt = chol_or_throw(sigma, what);
  const double logdet =
      2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double trace_term = llt.solve(scatter).trace();
  const double p = static_cast<double>(sigma.rows());
  return -0.5 * (n * logdet + trace_term + n * p * log_two_pi);
}

Matrix marginal_b_of(const Matrix& sigma, const PartitionSpec& part) {
  const int p_x = part.p_x, p_z = part.p_z, zoff = part.z_offset();
  Matrix out(part.p_b(), part.p_b());
  out.topLeftCorner(p_x, p_x) = sigma.topLeftCorner(p_x, p_x);
  out.topRightCorner(p_x, p_z) = sigma.block(0, zoff, p_x, p_z);
  out.bottomLeftCorner(p_z, p_x) = sigma.block(zoff, 0, p_z, p_x);
  out.bottomRightCorner(p_z, p_z) = sigma.block(zoff, zoff, p_z, p_z);
  return out;
}

// Regression of the latent factors on all p variables, loadings^T Sigma^{-1}.
Matrix factor_coefficients(const FactorModel& model, const Matrix& sigma) {
  auto llt = chol_or_throw(sigma, "factor_coefficients");
  return llt.solve(model.loadings).transpose();
}

// With expand_latent_scale the step treats the latent covariance as a free
// parameter and folds its Cholesky factor back into the loadings afterwards.
// The implied covariance is unchanged at fixed points, each step still
// increases the observed-data likelihood, and convergence along weakly
// determined directions is much faster than under the plain update.
FactorModel mstep_with_coef(const Matrix& expected_scatter,
                            const Matrix& factor_coef,
                            const FactorModel& model, double n,
                            double psi_floor,
                            bool expand_latent_scale = false) {
  const int q = model.q();
  Matrix bs = factor_coef * expected_scatter;  // q x p
  Matrix sys = n * (Matrix::Identity(q, q) - factor_coef * model.loadings) +
               bs * factor_coef.transpose();
  sys = 0.5 * (sys + sys.transpose()).eval();

  Eigen::LDLT<Matrix> ldlt(sys);
  if (ldlt.info() != Eigen::Success)
    throw SingularMStepError("mstep: factor system decomposition failed");
  const Vector d = ldlt.vectorD();
  if (!(d.minCoeff() > 1e-14 * d.maxCoeff()) || !(d.maxCoeff() > 0.0))
    throw SingularMStepError("mstep: factor system numerically singular");

  FactorModel out = model;
  out.loadings = ldlt.solve(bs).transpose();
  Vector fitted_diag =
      (out.loadings.array() * bs.transpose().array()).rowwise().sum();
  out.uniquenesses = ((expected_scatter.diagonal() - fitted_diag) / n)
                         .cwiseMax(psi_floor);
  if (expand_latent_scale) {
    Eigen::LLT<Matrix> gamma(sys / n);
    if (gamma.info() != Eigen::Success)
      throw SingularMStepError("mstep: latent second moment not positive definite");
    out.loadings = (out.loadings * Matrix(gamma.matrixL())).eval();
  }
  return out;
}

Vector pooled_covariance_diagonal(const ObservedScatter& scatter) {
  const PartitionSpec& part = scatter.partition;
  Vector diag(part.p());
  diag.head(part.p_x) = (scatter.scatter_a.diagonal().head(part.p_x) +
                         scatter.scatter_b.diagonal().head(part.p_x)) /
                        scatter.n();
  diag.segment(part.y_offset(), part.p_y) =
      scatter.scatter_a.diagonal().tail(part.p_y) / scatter.n_a;
  diag.tail(part.p_z) = scatter.scatter_b.diagonal().tail(part.p_z) / scatter.n_b;
  return diag;
}

struct RunState {
  FactorModel model;
  std::vector<double> trace;
  double loglik = 0.0;
};

void check_finite_loglik(double ll) {
  if (!std::isfinite(ll))
    throw NonFiniteError("fit: log-likelihood became non-finite");
}

// Shared random-restart protocol. update advances the model by one EM
// iteration; loglik evaluates the observed-data log-likelihood.
//
// Iterations run in cycles of three: two plain steps, then a squared
// extrapolation through them that is stabilised by a further step and kept
// only when it does not lower the likelihood. Every step appends one trace
// entry, so max_iter still bounds the total amount of EM work, and the trace
// stays monotone because rejected extrapolations fall back to a plain step.
template <class Update, class Loglik>
FitReport run_protocol(const PartitionSpec& partition, int q,
                       const EMConfig& config, const Vector& pooled_diag,
                       double psi_floor, Update update, Loglik loglik) {
  config.validate();
  if (q < 1 || q > partition.p())
    throw std::invalid_argument("fit: require 1 <= q <= p");

  auto stagnated = [&](double ll, double prev) {
    return std::abs(ll - prev) / (std::abs(prev) + 1.0) < config.tol;
  };

  // One plain step; returns true when the convergence test fires.
  auto plain_step = [&](RunState& st, bool check_convergence) {
    FactorModel next = update(st.model);
    double ll = loglik(next);
    check_finite_loglik(ll);
    const double prev = st.loglik;
    st.model = std::move(next);
    st.loglik = ll;
    st.trace.push_back(ll);
    return check_convergence && stagnated(ll, prev);
  };

  auto advance = [&](RunState& st, int steps, bool check_convergence) {
    constexpr double alpha_max = 8.0;
    int left = steps;
    while (left > 0) {
      if (left < 3) {
        if (plain_step(st, check_convergence)) return true;
        --left;
        continue;
      }
      const FactorModel th0 = st.model;
      if (plain_step(st, check_convergence)) return true;
      const FactorModel th1 = st.model;
      if (plain_step(st, check_convergence)) return true;
      const FactorModel th2 = st.model;
      left -= 2;

      const Matrix r_l = th1.loadings - th0.loadings;
      const Vector r_u = th1.uniquenesses - th0.uniquenesses;
      const Matrix v_l = th2.loadings - th1.loadings - r_l;
      const Vector v_u = th2.uniquenesses - th1.uniquenesses - r_u;
      const double rn = std::sqrt(r_l.squaredNorm() + r_u.squaredNorm());
      const double vn = std::sqrt(v_l.squaredNorm() + v_u.squaredNorm());

      bool accepted = false;
      if (vn > 0.0 && rn > 0.0) {
        const double alpha = std::min(-1.0, std::max(-rn / vn, -alpha_max));
        FactorModel extrap = th0;
        extrap.loadings = th0.loadings - 2.0 * alpha * r_l + alpha * alpha * v_l;
        extrap.uniquenesses =
            (th0.uniquenesses - 2.0 * alpha * r_u + alpha * alpha * v_u)
                .cwiseMax(psi_floor);
        try {
          FactorModel th3 = update(extrap);
          const double ll3 = loglik(th3);
          if (std::isfinite(ll3) && ll3 >= st.loglik) {
            st.model = std::move(th3);
            st.loglik = ll3;
            st.trace.push_back(ll3);
            accepted = true;
          }
        } catch (const Error&) {
          // A wild extrapolation can make a step inadmissible; keep th2.
        }
      }
      if (!accepted && plain_step(st, check_convergence)) return true;
      --left;
    }
    return false;
  };

  RunState best;
  int best_restart = 0;

  if (config.initial_model) {
    const FactorModel& init = *config.initial_model;
    init.validate();
    if (init.partition.p_x != partition.p_x ||
        init.partition.p_y != partition.p_y ||
        init.partition.p_z != partition.p_z || init.q() != q)
      throw std::invalid_argument("fit: supplied initial model shape mismatch");
    best.model = init;
    best.model.uniquenesses = init.uniquenesses.cwiseMax(psi_floor);
    best.loglik = loglik(best.model);
    check_finite_loglik(best.loglik);
  } else {
    const int burn = std::min(config.burn_iters, config.max_iter);
    const Vector psi0 = (0.5 * pooled_diag).cwiseMax(psi_floor);
    // Loading starts are random but scale-matched: half of each variable's
    // pooled variance is split across the q factors.
    const Vector row_scale =
        ((0.5 / q) * pooled_diag).cwiseMax(psi_floor).cwiseSqrt();
    bool have_best = false;
    for (int r = 0; r < config.restarts; ++r) {
      Rng rng = Rng::substream(config.seed, static_cast<std::uint64_t>(r));
      RunState st;
      st.model.partition = partition;
      st.model.loadings = Matrix(partition.p(), q);
      for (int i = 0; i < partition.p(); ++i)
        for (int j = 0; j < q; ++j)
          st.model.loadings(i, j) = row_scale(i) * rng.normal();
      st.model.uniquenesses = psi0;
      st.loglik = loglik(st.model);
      check_finite_loglik(st.loglik);
      advance(st, burn, false);
      if (!have_best || st.loglik > best.loglik) {
        best = std::move(st);
        best_restart = r;
        have_best = true;
      }
    }
  }

  const int remaining = config.max_iter - static_cast<int>(best.trace.size());
  const bool converged = advance(best, remaining, true);

  FitReport report;
  report.model = std::move(best.model);
  report.iterations = static_cast<int>(best.trace.size());
  report.loglik_trace = std::move(best.trace);
  report.converged = converged;
  report.final_loglik = best.loglik;
  report.seed = config.seed;
  report.best_restart = best_restart;
  return report;
}

}  // namespace

void EMConfig::validate() const {
  if (max_iter < 1) throw std::invalid_argument("EMConfig: max_iter >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("EMConfig: tol > 0");
  if (restarts < 1) throw std::invalid_argument("EMConfig: restarts >= 1");
  if (burn_iters < 0) throw std::invalid_argument("EMConfig: burn_iters >= 0");
  if (!(psi_floor_scale >= 0.0))
    throw std::invalid_argument("EMConfig: psi_floor_scale >= 0");
}

double loglik_observed(const FactorModel& model, const ObservedScatter& scatter) {
  model.validate();
  const PartitionSpec& part = scatter.partition;
  Matrix sigma = implied_sigma(model);
  double ll_a = gaussian_loglik(sigma.topLeftCorner(part.p_a(), part.p_a()),
                                scatter.scatter_a, scatter.n_a, "loglik_observed");
  double ll_b = gaussian_loglik(marginal_b_of(sigma, part), scatter.scatter_b,
                                scatter.n_b, "loglik_observed");
  return ll_a + ll_b;
}

double loglik_complete(const FactorModel& model, const Matrix& scatter, double n) {
  model.validate();
  if (scatter.rows() != model.loadings.rows() ||
      scatter.cols() != model.loadings.rows())
    throw std::invalid_argument("loglik_complete: scatter shape mismatch");
  return gaussian_loglik(implied_sigma(model), scatter, n, "loglik_complete");
}

EStepIntermediates estep(const FactorModel& model, const ObservedScatter& scatter) {
  model.validate();
  const PartitionSpec& part = scatter.partition;
  if (model.partition.p_x != part.p_x || model.partition.p_y != part.p_y ||
      model.partition.p_z != part.p_z)
    throw std::invalid_argument("estep: partition mismatch");
  const int p = part.p(), p_x = part.p_x, p_y = part.p_y, p_z = part.p_z;
  const int p_a = part.p_a(), p_b = part.p_b();
  const int yoff = part.y_offset(), zoff = part.z_offset();

  Matrix sigma = implied_sigma(model);
  auto llt_a = chol_or_throw(sigma.topLeftCorner(p_a, p_a), "estep A side");
  auto llt_b = chol_or_throw(marginal_b_of(sigma, part), "estep B side");
  auto llt_full = chol_or_throw(sigma, "estep");

  EStepIntermediates out;
  out.factor_coef = llt_full.solve(model.loadings).transpose();

  Matrix cross_az = sigma.block(0, zoff, p_a, p_z);
  Matrix omega_t = llt_a.solve(cross_az);  // p_A x p_Z
  out.z_on_a_coef = omega_t.transpose();
  out.z_cond_cov = symmetrize_from_lower(
      sigma.block(zoff, zoff, p_z, p_z) - out.z_on_a_coef * cross_az);

  Matrix cross_by(p_b, p_y);
  cross_by.topRows(p_x) = sigma.block(0, yoff, p_x, p_y);
  cross_by.bottomRows(p_z) = sigma.block(zoff, yoff, p_z, p_y);
  Matrix alpha_t = llt_b.solve(cross_by);  // p_B x p_Y
  out.y_on_b_coef = alpha_t.transpose();
  out.y_cond_cov = symmetrize_from_lower(
      sigma.block(yoff, yoff, p_y, p_y) - out.y_on_b_coef * cross_by);

  Matrix p_aug = Matrix::Zero(p, p);
  p_aug.topLeftCorner(p_a, p_a) = scatter.scatter_a;
  Matrix paz = scatter.scatter_a * omega_t;  // p_A x p_Z
  p_aug.block(0, zoff, p_a, p_z) = paz;
  p_aug.block(zoff, 0, p_z, p_a) = paz.transpose();
  p_aug.block(zoff, zoff, p_z, p_z) =
      out.z_on_a_coef * paz + scatter.n_a * out.z_cond_cov;
  out.scatter_a_aug = symmetrize_from_lower(p_aug);

  Matrix t_aug = Matrix::Zero(p, p);
  t_aug.topLeftCorner(p_x, p_x) = scatter.scatter_b.topLeftCorner(p_x, p_x);
  t_aug.block(0, zoff, p_x, p_z) = scatter.scatter_b.topRightCorner(p_x, p_z);
  t_aug.block(zoff, 0, p_z, p_x) = scatter.scatter_b.bottomLeftCorner(p_z, p_x);
  t_aug.block(zoff, zoff, p_z, p_z) =
      scatter.scatter_b.bottomRightCorner(p_z, p_z);
  Matrix tby = scatter.scatter_b * alpha_t;  // p_B x p_Y
  t_aug.block(0, yoff, p_x, p_y) = tby.topRows(p_x);
  t_aug.block(yoff, 0, p_y, p_x) = tby.topRows(p_x).transpose();
  t_aug.block(zoff, yoff, p_z, p_y) = tby.bottomRows(p_z);
  t_aug.block(yoff, zoff, p_y, p_z) = tby.bottomRows(p_z).transpose();
  t_aug.block(yoff, yoff, p_y, p_y) =
      out.y_on_b_coef * tby + scatter.n_b * out.y_cond_cov;
  out.scatter_b_aug = symmetrize_from_lower(t_aug);

  out.expected_scatter = out.scatter_a_aug + out.scatter_b_aug;
  return out;
}

FactorModel mstep(const Matrix& expected_scatter, const FactorModel& model,
                  double n, double psi_floor) {
  model.validate();
  const int p = static_cast<int>(model.loadings.rows());
  if (expected_scatter.rows() != p || expected_scatter.cols() != p)
    throw std::invalid_argument("mstep: scatter shape mismatch");
  if (!(n >= 1.0)) throw std::invalid_argument("mstep: n >= 1");
  Matrix coef = factor_coefficients(model, implied_sigma(model));
  return mstep_with_coef(expected_scatter, coef, model, n, psi_floor);
}

double default_psi_floor(const ObservedScatter& scatter, double scale) {
  return scale * pooled_covariance_diagonal(scatter).maxCoeff();
}

double default_psi_floor(const Matrix& scatter, double n, double scale) {
  return scale * scatter.diagonal().maxCoeff() / n;
}

FitReport fit(const ObservedScatter& scatter, int q, const EMConfig& config) {
  const Vector pooled = pooled_covariance_diagonal(scatter);
  const double floor = config.psi_floor_scale * pooled.maxCoeff();
  const double n = scatter.n();
  auto update = [&](const FactorModel& m) {
    EStepIntermediates e = estep(m, scatter);
    return mstep_with_coef(e.expected_scatter, e.factor_coef, m, n, floor, true);
  };
  auto ll = [&](const FactorModel& m) { return loglik_observed(m, scatter); };
  return run_protocol(scatter.partition, q, config, pooled, floor, update, ll);
}

FitReport fit_complete(const Matrix& scatter, double n,
                       const PartitionSpec& partition, int q,
                       const EMConfig& config) {
  partition.validate();
  if (scatter.rows() != partition.p() || scatter.cols() != partition.p())
    throw std::invalid_argument("fit_complete: scatter shape mismatch");
  if (!(n >= 1.0)) throw std::invalid_argument("fit_complete: n >= 1");
  Matrix s = symmetrize_from_lower(0.5 * (scatter + scatter.transpose()));
  const Vector pooled = s.diagonal() / n;
  const double floor = config.psi_floor_scale * pooled.maxCoeff();
  auto update = [&](const FactorModel& m) {
    Matrix coef = factor_coefficients(m, implied_sigma(m));
    return mstep_with_coef(s, coef, m, n, floor, true);
  };
  auto ll = [&](const FactorModel& m) { return loglik_complete(m, s, n); };
  return run_protocol(partition, q, config, pooled, floor, update, ll);
}

}  // namespace fmatch
