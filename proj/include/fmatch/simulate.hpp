#pragma once

#include "fmatch/baselines.hpp"
#include "fmatch/em.hpp"
#include "fmatch/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fmatch {

struct SimDesign {
  PartitionSpec partition;
  int q_true = 1;
  int n_a = 1;
  int n_b = 1;
  double loading_mean = 2.0;
  double loading_sd = 1.0;
  double uniqueness_base = 3.0;  // uniqueness = (base + sd*normal)^2
  double uniqueness_sd = 0.1;
  bool standardize = false;  // rescale to unit implied variances
  std::uint64_t seed = 0;

  void validate() const;
};

struct SampledModel {
  FactorModel model;
  Matrix sigma;  // implied covariance of the (possibly standardized) model
};

/// Draws loadings and uniquenesses per the design distributions.
SampledModel sample_model(const SimDesign& design);

struct SampledDatasets {
  Matrix data_a;  // n_A x (p_X+p_Y), raw draws
  Matrix data_b;  // n_B x (p_X+p_Z)
  ObservedScatter scatter;  // scatters of the per-dataset centered data
};

/// Gaussian draws from the two marginal models via Cholesky factors.
SampledDatasets sample_datasets(const FactorModel& model, int n_a, int n_b,
                                std::uint64_t seed);

/// n joint rows from the full implied covariance.
Matrix sample_complete(const FactorModel& model, int n, std::uint64_t seed);

/// Squared Frobenius distance scaled by the block size p_Y*p_Z.
double mse_yz(const Matrix& estimate, const Matrix& truth);

/// Mean squared error over every entry of sigma outside the YZ/ZY blocks.
double mse_observed_blocks(const Matrix& estimate_sigma, const Matrix& truth_sigma,
                           const PartitionSpec& partition);

// ---------------------------------------------------------------------------
// Random-initialization identifiability experiment: repeated EM fits on
// population-exact scatters, one independent random start per seed index.

struct IdentifiabilityConfig {
  int n_seeds = 50;
  int max_iter = 10000;
  double nominal_n = 1000.0;  // scatters fed to EM are nominal_n * Sigma
  std::uint64_t seed = 0;
};

struct IdentifiabilityRecord {
  int seed_index = 0;
  int q_fit = 0;
  double mse_yz = 0.0;
  double mse_observed = 0.0;
  bool converged = false;
  int iterations = 0;
  bool trace_monotone = false;
  double worst_trace_step = 0.0;
  bool failed = false;
  std::string error;
};

std::vector<IdentifiabilityRecord> run_identifiability_experiment(
    const FactorModel& truth, int q_fit, const IdentifiabilityConfig& config);

/// Columns: seed,q,mse_yz,mse_observed,converged,iterations,monotone.
std::string identifiability_csv(const std::vector<IdentifiabilityRecord>& records);

// ---------------------------------------------------------------------------
// Variable-permutation benchmark: columns of a complete data matrix are
// reallocated to the (X, Y, Z) groups per replicate, the file-matching
// pattern is imposed, and each estimator is scored against the complete-data
// sample cross-covariance.

enum class Method { FactorModel, CIA, ALS, SoftImpute, SvdImpute, CompleteCases };

std::string method_tag(Method m);
Method parse_method(const std::string& tag);

struct BenchmarkConfig {
  std::vector<Method> methods;
  int n_perms = 100;
  int q = 1;  // rank used by fm, als, svdimpute and complete
  std::uint64_t seed = 0;
  EMConfig em;
  CompletionOptions completion;

  void validate() const;
};

struct BenchmarkRecord {
  int permutation = 0;
  Method method = Method::FactorModel;
  double mse = 0.0;
  double runtime_seconds = 0.0;  // in-memory diagnostic, never serialized
  bool converged = false;
  bool failed = false;
  std::string error;
  bool trace_monotone = true;   // EM-based methods only
  double worst_trace_step = 0.0;
};

struct MethodSummary {
  Method method = Method::FactorModel;
  int n_ok = 0;
  double median_mse = 0.0;
  double iqr = 0.0;
};

struct BenchmarkResult {
  std::vector<BenchmarkRecord> records;
  std::vector<MethodSummary> summaries;

  /// Columns: permutation,method,mse_yz,converged,failed.
  std::string records_csv() const;
  /// Columns: method,n_ok,median_mse,iqr.
  std::string summary_csv() const;
};

/// complete_data rows 0..n_a-1 become dataset A, the rest dataset B.
BenchmarkResult run_permutation_benchmark(const Matrix& complete_data, int n_a,
                                          const PartitionSpec& partition,
                                          const BenchmarkConfig& config);

// ---------------------------------------------------------------------------
// Factor-count selection under permutation replicates.

struct SelectionConfig {
  int n_replicates = 20;
  int q_min = 1;
  int q_max = 6;
  std::uint64_t seed = 0;
  EMConfig em;
};

struct SelectionRecord {
  int replicate = 0;
  int selected_q = -1;
  bool any_row_failed = false;
  bool all_traces_monotone = true;
  double worst_trace_step = 0.0;
  std::vector<int> row_q;
  std::vector<double> row_bic;
};

std::vector<SelectionRecord> run_selection_experiment(const Matrix& complete_data,
                                                      int n_a,
                                                      const PartitionSpec& partition,
                                                      const SelectionConfig& config);

/// Columns: replicate,selected_q followed by bic_q<k> per swept q.
std::string selection_csv(const std::vector<SelectionRecord>& records);

}  // namespace fmatch
