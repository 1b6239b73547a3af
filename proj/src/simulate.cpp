#include "fmatch/simulate.hpp"

#include "fmatch/errors.hpp"
#include "fmatch/model_selection.hpp"
#include "fmatch/rng.hpp"
#include "fmatch/util.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace fmatch {

void SimDesign::validate() const {
  partition.validate();
  if (q_true < 1) throw std::invalid_argument("SimDesign: q_true >= 1");
  if (n_a < 1 || n_b < 1) throw std::invalid_argument("SimDesign: counts >= 1");
  if (loading_sd < 0 || uniqueness_sd < 0)
    throw std::invalid_argument("SimDesign: sds >= 0");
}

SampledModel sample_model(const SimDesign& design) {
  design.validate();
  const int p = design.partition.p();
  Rng rng(design.seed);

  FactorModel model;
  model.partition = design.partition;
  model.loadings = Matrix(p, design.q_true);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < design.q_true; ++j)
      model.loadings(i, j) = rng.normal(design.loading_mean, design.loading_sd);
  model.uniquenesses = Vector(p);
  for (int i = 0; i < p; ++i) {
    const double d = rng.normal(design.uniqueness_base, design.uniqueness_sd);
    model.uniquenesses(i) = d * d;
  }

  if (design.standardize) {
    Vector sd = implied_sigma(model).diagonal().cwiseSqrt();
    for (int i = 0; i < p; ++i) {
      model.loadings.row(i) /= sd(i);
      model.uniquenesses(i) /= sd(i) * sd(i);
    }
  }

  SampledModel out;
  out.sigma = implied_sigma(model);
  out.model = std::move(model);
  return out;
}

namespace {

// Rows drawn as L * g with g standard normal, g filled row by row.
Matrix gaussian_rows(const Matrix& covariance, int n, Rng& rng) {
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw SingularCovarianceError("gaussian_rows: covariance not positive definite");
  const Matrix l = llt.matrixL();
  const int p = static_cast<int>(covariance.rows());
  Matrix data(n, p);
  Vector g(p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) g(j) = rng.normal();
    data.row(i) = (l * g).transpose();
  }
  return data;
}

Matrix centered(const Matrix& data) {
  return data.rowwise() - data.colwise().mean();
}

Matrix marginal_b_cov(const Matrix& sigma, const PartitionSpec& part) {
  const int p_x = part.p_x, p_z = part.p_z, zoff = part.z_offset();
  Matrix out(part.p_b(), part.p_b());
  out.topLeftCorner(p_x, p_x) = sigma.topLeftCorner(p_x, p_x);
  out.topRightCorner(p_x, p_z) = sigma.block(0, zoff, p_x, p_z);
  out.bottomLeftCorner(p_z, p_x) = sigma.block(zoff, 0, p_z, p_x);
  out.bottomRightCorner(p_z, p_z) = sigma.block(zoff, zoff, p_z, p_z);
  return out;
}

}  // namespace

SampledDatasets sample_datasets(const FactorModel& model, int n_a, int n_b,
                                std::uint64_t seed) {
  model.validate();
  if (n_a < 1 || n_b < 1)
    throw std::invalid_argument("sample_datasets: counts >= 1");
  const PartitionSpec& part = model.partition;
  Matrix sigma = implied_sigma(model);

  Rng rng_a = Rng::substream(seed, 0);
  Rng rng_b = Rng::substream(seed, 1);
  SampledDatasets out;
  out.data_a = gaussian_rows(sigma.topLeftCorner(part.p_a(), part.p_a()), n_a, rng_a);
  out.data_b = gaussian_rows(marginal_b_cov(sigma, part), n_b, rng_b);

  Matrix ca = centered(out.data_a);
  Matrix cb = centered(out.data_b);
  out.scatter = ObservedScatter::create(part, ca.transpose() * ca,
                                        cb.transpose() * cb, n_a, n_b);
  return out;
}

Matrix sample_complete(const FactorModel& model, int n, std::uint64_t seed) {
  model.validate();
  if (n < 1) throw std::invalid_argument("sample_complete: n >= 1");
  Rng rng = Rng::substream(seed, 0);
  return gaussian_rows(implied_sigma(model), n, rng);
}

double mse_yz(const Matrix& estimate, const Matrix& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw std::invalid_argument("mse_yz: shape mismatch");
  return (estimate - truth).squaredNorm() /
         static_cast<double>(estimate.rows() * estimate.cols());
}

double mse_observed_blocks(const Matrix& estimate_sigma, const Matrix& truth_sigma,
                           const PartitionSpec& partition) {
  const int p = partition.p();
  if (estimate_sigma.rows() != p || estimate_sigma.cols() != p ||
      truth_sigma.rows() != p || truth_sigma.cols() != p)
    throw std::invalid_argument("mse_observed_blocks: shape mismatch");
  Matrix diff = estimate_sigma - truth_sigma;
  const int yoff = partition.y_offset(), zoff = partition.z_offset();
  diff.block(yoff, zoff, partition.p_y, partition.p_z).setZero();
  diff.block(zoff, yoff, partition.p_z, partition.p_y).setZero();
  const int cells = p * p - 2 * partition.p_y * partition.p_z;
  return diff.squaredNorm() / static_cast<double>(cells);
}

std::vector<IdentifiabilityRecord> run_identifiability_experiment(
    const FactorModel& truth, int q_fit, const IdentifiabilityConfig& config) {
  truth.validate();
  if (config.n_seeds < 1 || config.max_iter < 1 || !(config.nominal_n >= 1.0))
    throw std::invalid_argument("run_identifiability_experiment: bad config");
  const PartitionSpec& part = truth.partition;
  Matrix sigma = implied_sigma(truth);
  ObservedScatter scatter = ObservedScatter::create(
      part, config.nominal_n * sigma.topLeftCorner(part.p_a(), part.p_a()),
      config.nominal_n * marginal_b_cov(sigma, part), config.nominal_n,
      config.nominal_n);
  const Matrix truth_yz = sigma.block(part.y_offset(), part.z_offset(),
                                      part.p_y, part.p_z);

  std::vector<IdentifiabilityRecord> records;
  records.reserve(config.n_seeds);
  for (int s = 0; s < config.n_seeds; ++s) {
    IdentifiabilityRecord rec;
    rec.seed_index = s;
    rec.q_fit = q_fit;
    EMConfig em;
    em.max_iter = config.max_iter;
    em.tol = 1e-300;  // run to the iteration cap; every start is kept as-is
    em.restarts = 1;
    em.burn_iters = 0;
    em.seed = Rng::mix(config.seed, static_cast<std::uint64_t>(s));
    try {
      FitReport report = fit(scatter, q_fit, em);
      Matrix fitted = implied_sigma(report.model);
      rec.mse_yz = mse_yz(
          fitted.block(part.y_offset(), part.z_offset(), part.p_y, part.p_z),
          truth_yz);
      rec.mse_observed = mse_observed_blocks(fitted, sigma, part);
      rec.converged = report.converged;
      rec.iterations = report.iterations;
      rec.trace_monotone = report.trace_monotone();
      rec.worst_trace_step = report.worst_trace_step();
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::string identifiability_csv(const std::vector<IdentifiabilityRecord>& records) {
  std::string out = "seed,q,mse_yz,mse_observed,converged,iterations,monotone\n";
  for (const auto& r : records) {
    out += std::to_string(r.seed_index);
    out += ',';
    out += std::to_string(r.q_fit);
    out += ',';
    out += r.failed ? "nan" : format_double(r.mse_yz);
    out += ',';
    out += r.failed ? "nan" : format_double(r.mse_observed);
    out += ',';
    out += r.converged ? '1' : '0';
    out += ',';
    out += std::to_string(r.iterations);
    out += ',';
    out += r.trace_monotone ? '1' : '0';
    out += '\n';
  }
  return out;
}

std::string method_tag(Method m) {
  switch (m) {
    case Method::FactorModel: return "fm";
    case Method::CIA: return "cia";
    case Method::ALS: return "als";
    case Method::SoftImpute: return "softimpute";
    case Method::SvdImpute: return "svdimpute";
    case Method::CompleteCases: return "complete";
  }
  throw std::invalid_argument("method_tag: unknown method");
}

Method parse_method(const std::string& tag) {
  if (tag == "fm") return Method::FactorModel;
  if (tag == "cia") return Method::CIA;
  if (tag == "als") return Method::ALS;
  if (tag == "softimpute") return Method::SoftImpute;
  if (tag == "svdimpute") return Method::SvdImpute;
  if (tag == "complete") return Method::CompleteCases;
  throw std::invalid_argument("unknown method tag: " + tag);
}

void BenchmarkConfig::validate() const {
  if (methods.empty())
    throw std::invalid_argument("BenchmarkConfig: at least one method");
  if (n_perms < 1) throw std::invalid_argument("BenchmarkConfig: n_perms >= 1");
  if (q < 1) throw std::invalid_argument("BenchmarkConfig: q >= 1");
  em.validate();
  completion.validate();
}

namespace {

struct PermutedSplit {
  Matrix data_a;   // centered, columns (X, Y)
  Matrix data_b;   // centered, columns (X, Z)
  ObservedScatter scatter;
  Matrix truth_yz;  // complete-data sample cross-covariance
  Matrix complete_scatter;  // of the centered complete permuted data
};

PermutedSplit permute_and_split(const Matrix& complete_data, int n_a,
                                const PartitionSpec& part, Rng& rng) {
  const int n = static_cast<int>(complete_data.rows());
  const int p = part.p();
  std::vector<int> cols(p);
  std::iota(cols.begin(), cols.end(), 0);
  rng.shuffle(cols);

  Matrix permuted(n, p);
  for (int j = 0; j < p; ++j) permuted.col(j) = complete_data.col(cols[j]);

  PermutedSplit out;
  Matrix full_centered = centered(permuted);
  out.complete_scatter = full_centered.transpose() * full_centered;
  out.truth_yz = out.complete_scatter.block(part.y_offset(), part.z_offset(),
                                            part.p_y, part.p_z) /
                 static_cast<double>(n);

  const int n_b = n - n_a;
  out.data_a = centered(permuted.topLeftCorner(n_a, part.p_a()));
  Matrix b_raw(n_b, part.p_b());
  b_raw.leftCols(part.p_x) = permuted.bottomLeftCorner(n_b, part.p_x);
  b_raw.rightCols(part.p_z) = permuted.bottomRightCorner(n_b, part.p_z);
  out.data_b = centered(b_raw);
  out.scatter = ObservedScatter::create(
      part, out.data_a.transpose() * out.data_a,
      out.data_b.transpose() * out.data_b, n_a, n_b);
  return out;
}

PartialCovariance pooled_partial(const ObservedScatter& sc) {
  PartialCovariance out;
  out.partition = sc.partition;
  out.xx = (sc.a_xx() + sc.b_xx()) / sc.n();
  out.xy = sc.a_xy() / sc.n_a;
  out.xz = sc.b_xz() / sc.n_b;
  out.yy = sc.a_yy() / sc.n_a;
  out.zz = sc.b_zz() / sc.n_b;
  return out;
}

}  // namespace

BenchmarkResult run_permutation_benchmark(const Matrix& complete_data, int n_a,
                                          const PartitionSpec& partition,
                                          const BenchmarkConfig& config) {
  partition.validate();
  config.validate();
  const int n = static_cast<int>(complete_data.rows());
  if (complete_data.cols() != partition.p())
    throw std::invalid_argument("run_permutation_benchmark: column count != p");
  if (n_a < 2 || n - n_a < 2)
    throw std::invalid_argument("run_permutation_benchmark: need >= 2 rows per dataset");

  BenchmarkResult result;
  result.records.reserve(static_cast<std::size_t>(config.n_perms) *
                         config.methods.size());

  for (int perm = 0; perm < config.n_perms; ++perm) {
    Rng rng = Rng::substream(config.seed, static_cast<std::uint64_t>(perm));
    PermutedSplit split = permute_and_split(complete_data, n_a, partition, rng);
    const std::uint64_t task_seed =
        Rng::mix(config.seed, static_cast<std::uint64_t>(perm));

    for (Method method : config.methods) {
      BenchmarkRecord rec;
      rec.permutation = perm;
      rec.method = method;
      const auto start = std::chrono::steady_clock::now();
      try {
        Matrix estimate;
        switch (method) {
          case Method::FactorModel: {
            EMConfig em = config.em;
            em.seed = task_seed;
            FitReport report = fit(split.scatter, config.q, em);
            estimate = implied_covariance(report.model).yz.value();
            rec.converged = report.converged;
            rec.trace_monotone = report.trace_monotone();
            rec.worst_trace_step = report.worst_trace_step();
            break;
          }
          case Method::CIA: {
            estimate = cia_estimate(pooled_partial(split.scatter));
            rec.converged = true;
            break;
          }
          case Method::ALS: {
            ImputedDataset imp = als_complete(split.data_a, split.data_b,
                                              partition, config.q,
                                              config.completion);
            estimate = covariance_from_imputed(imp);
            rec.converged = imp.converged;
            break;
          }
          case Method::SoftImpute: {
            CompletionOptions opts = config.completion;
            opts.seed = task_seed;
            ImputedDataset imp =
                soft_impute(split.data_a, split.data_b, partition, {}, opts);
            estimate = covariance_from_imputed(imp);
            rec.converged = imp.converged;
            break;
          }
          case Method::SvdImpute: {
            ImputedDataset imp = svd_impute(split.data_a, split.data_b,
                                            partition, config.q,
                                            config.completion);
            estimate = covariance_from_imputed(imp);
            rec.converged = imp.converged;
            break;
          }
          case Method::CompleteCases: {
            EMConfig em = config.em;
            em.seed = task_seed;
            FitReport report = fit_complete(split.complete_scatter,
                                            static_cast<double>(n), partition,
                                            config.q, em);
            estimate = implied_covariance(report.model).yz.value();
            rec.converged = report.converged;
            rec.trace_monotone = report.trace_monotone();
            rec.worst_trace_step = report.worst_trace_step();
            break;
          }
        }
        rec.mse = mse_yz(estimate, split.truth_yz);
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
      }
      rec.runtime_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
              .count();
      result.records.push_back(std::move(rec));
    }
  }

  for (Method method : config.methods) {
    MethodSummary summary;
    summary.method = method;
    std::vector<double> values;
    for (const auto& rec : result.records)
      if (rec.method == method && !rec.failed) values.push_back(rec.mse);
    summary.n_ok = static_cast<int>(values.size());
    if (!values.empty()) {
      summary.median_mse = median(values);
      summary.iqr = quantile(values, 0.75) - quantile(values, 0.25);
    }
    result.summaries.push_back(summary);
  }
  return result;
}

std::string BenchmarkResult::records_csv() const {
  std::string out = "permutation,method,mse_yz,converged,failed\n";
  for (const auto& r : records) {
    out += std::to_string(r.permutation);
    out += ',';
    out += method_tag(r.method);
    out += ',';
    out += r.failed ? "nan" : format_double(r.mse);
    out += ',';
    out += r.converged ? '1' : '0';
    out += ',';
    out += r.failed ? '1' : '0';
    out += '\n';
  }
  return out;
}

std::string BenchmarkResult::summary_csv() const {
  std::string out = "method,n_ok,median_mse,iqr\n";
  for (const auto& s : summaries) {
    out += method_tag(s.method);
    out += ',';
    out += std::to_string(s.n_ok);
    out += ',';
    out += s.n_ok > 0 ? format_double(s.median_mse) : "nan";
    out += ',';
    out += s.n_ok > 0 ? format_double(s.iqr) : "nan";
    out += '\n';
  }
  return out;
}

std::vector<SelectionRecord> run_selection_experiment(const Matrix& complete_data,
                                                      int n_a,
                                                      const PartitionSpec& partition,
                                                      const SelectionConfig& config) {
  partition.validate();
  if (config.n_replicates < 1)
    throw std::invalid_argument("run_selection_experiment: n_replicates >= 1");
  const int n = static_cast<int>(complete_data.rows());
  if (complete_data.cols() != partition.p())
    throw std::invalid_argument("run_selection_experiment: column count != p");
  if (n_a < 2 || n - n_a < 2)
    throw std::invalid_argument("run_selection_experiment: need >= 2 rows per dataset");

  std::vector<SelectionRecord> records;
  records.reserve(config.n_replicates);
  for (int rep = 0; rep < config.n_replicates; ++rep) {
    Rng rng = Rng::substream(config.seed, static_cast<std::uint64_t>(rep));
    PermutedSplit split = permute_and_split(complete_data, n_a, partition, rng);
    EMConfig em = config.em;
    em.seed = Rng::mix(config.seed, static_cast<std::uint64_t>(rep));
    BICTable table = select_q(split.scatter, config.q_min, config.q_max, em);

    SelectionRecord rec;
    rec.replicate = rep;
    rec.selected_q = table.selected_q;
    for (const BICRow& row : table.rows) {
      rec.row_q.push_back(row.q);
      rec.row_bic.push_back(row.failed
                                ? std::numeric_limits<double>::quiet_NaN()
                                : row.bic);
      if (row.failed) rec.any_row_failed = true;
      if (!row.failed && !row.trace_monotone) rec.all_traces_monotone = false;
      rec.worst_trace_step = std::max(rec.worst_trace_step, row.worst_trace_step);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::string selection_csv(const std::vector<SelectionRecord>& records) {
  std::string out = "replicate,selected_q";
  if (!records.empty())
    for (int q : records.front().row_q) out += ",bic_q" + std::to_string(q);
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.replicate);
    out += ',';
    out += std::to_string(r.selected_q);
    for (double b : r.row_bic) {
      out += ',';
      out += std::isnan(b) ? "nan" : format_double(b);
    }
    out += '\n';
  }
  return out;
}

}  // namespace fmatch
