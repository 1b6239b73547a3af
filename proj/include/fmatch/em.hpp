#pragma once

#include "fmatch/types.hpp"

#include <cstdint>
#include <optional>

namespace fmatch {

struct EMConfig {
  int max_iter = 2000;
  double tol = 1e-8;  // relative log-likelihood change
  std::uint64_t seed = 0;
  int restarts = 100;    // random-init protocol: short runs kept by best loglik
  int burn_iters = 50;   // length of each short run
  std::optional<FactorModel> initial_model;  // overrides the random protocol
  double psi_floor_scale = 1e-8;  // floor = scale * max diag of scatter/n

  void validate() const;
};

/// Intermediates of the conditional-expectation step on the half-observed
/// scatters. factor_coef is the regression of the latent factors on all p
/// variables; z_on_a_coef and y_on_b_coef regress each dataset's missing
/// block on its observed block. scatter_a_aug and scatter_b_aug are the p x p
/// augmented scatters (observed blocks kept, missing blocks filled with their
/// conditional expectations), and expected_scatter is their sum.
struct EStepIntermediates {
  Matrix factor_coef;    // q x p
  Matrix z_on_a_coef;    // p_Z x (p_X+p_Y)
  Matrix y_on_b_coef;    // p_Y x (p_X+p_Z)
  Matrix z_cond_cov;     // p_Z x p_Z, covariance of Z given (X,Y)
  Matrix y_cond_cov;     // p_Y x p_Y, covariance of Y given (X,Z)
  Matrix scatter_a_aug;  // p x p
  Matrix scatter_b_aug;  // p x p
  Matrix expected_scatter;  // p x p, symmetric
};

/// Sum of the two marginal Gaussian log-likelihoods evaluated at the model,
/// including the normalizing constants.
double loglik_observed(const FactorModel& model, const ObservedScatter& scatter);

/// Complete-data Gaussian log-likelihood from a p x p scatter of n rows.
double loglik_complete(const FactorModel& model, const Matrix& scatter, double n);

EStepIntermediates estep(const FactorModel& model, const ObservedScatter& scatter);

/// One maximization step from an expected scatter. psi entries are floored
/// at psi_floor. Throws SingularMStepError when the q x q system degenerates.
FactorModel mstep(const Matrix& expected_scatter, const FactorModel& model,
                  double n, double psi_floor = 0.0);

double default_psi_floor(const ObservedScatter& scatter, double scale);
double default_psi_floor(const Matrix& scatter, double n, double scale);

/// Maximum-likelihood factor model from half-observed scatters. Random-init
/// protocol: `restarts` short runs of `burn_iters` iterations from loadings
/// with i.i.d. standard-normal entries, keep the best log-likelihood, then
/// iterate to convergence or max_iter. A supplied initial model bypasses the
/// protocol.
FitReport fit(const ObservedScatter& scatter, int q, const EMConfig& config);

/// Same estimator from a complete p x p scatter of n rows.
FitReport fit_complete(const Matrix& scatter, double n,
                       const PartitionSpec& partition, int q,
                       const EMConfig& config);

}  // namespace fmatch
