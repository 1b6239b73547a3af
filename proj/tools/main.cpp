// Command line front end for the factor matching library.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "fmatch/baselines.hpp"
#include "fmatch/em.hpp"
#include "fmatch/errors.hpp"
#include "fmatch/gram_completion.hpp"
#include "fmatch/identifiability.hpp"
#include "fmatch/ingest.hpp"
#include "fmatch/model_selection.hpp"
#include "fmatch/rng.hpp"
#include "fmatch/simulate.hpp"
#include "fmatch/svg_plot.hpp"
#include "fmatch/types.hpp"
#include "fmatch/util.hpp"

namespace {

using fmatch::Matrix;
using fmatch::Vector;

constexpr std::uint64_t kDefaultSeed = 1729;

std::uint64_t initial_seed() {
  if (const char* env = std::getenv("FACTORMATCH_SEED")) {
    std::string text(env);
    try {
      std::size_t used = 0;
      const auto value = std::stoull(text, &used);
      if (used == text.size()) return static_cast<std::uint64_t>(value);
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("FACTORMATCH_SEED is not an unsigned integer: " + text);
  }
  return kDefaultSeed;
}

std::vector<std::string> block_labels(const fmatch::PartitionSpec& part) {
  if (!part.labels.empty()) return part.labels;
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(part.p()));
  for (int j = 0; j < part.p_x; ++j) out.push_back("x" + std::to_string(j + 1));
  for (int j = 0; j < part.p_y; ++j) out.push_back("y" + std::to_string(j + 1));
  for (int j = 0; j < part.p_z; ++j) out.push_back("z" + std::to_string(j + 1));
  return out;
}

std::string matrix_csv(const Matrix& values, const std::vector<std::string>& col_names,
                       const std::vector<std::string>& row_names) {
  std::string out;
  if (!row_names.empty()) out += "row,";
  for (std::size_t j = 0; j < col_names.size(); ++j) {
    if (j) out += ',';
    out += fmatch::csv_escape(col_names[j]);
  }
  out += '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    if (!row_names.empty()) {
      out += fmatch::csv_escape(row_names[static_cast<std::size_t>(i)]);
      out += ',';
    }
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (j) out += ',';
      out += fmatch::format_double(values(i, j));
    }
    out += '\n';
  }
  return out;
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-")
    std::cout << content;
  else
    fmatch::write_text_file(path, content);
}

std::string yes_no(bool value) { return value ? "yes" : "no"; }

std::string tri_state(const std::optional<bool>& value) {
  if (!value.has_value()) return "undetermined";
  return yes_no(*value);
}

struct EmFlags {
  int max_iter = fmatch::EMConfig{}.max_iter;
  double tol = fmatch::EMConfig{}.tol;
  int restarts = fmatch::EMConfig{}.restarts;
  int burn_iters = fmatch::EMConfig{}.burn_iters;
  double psi_floor_scale = fmatch::EMConfig{}.psi_floor_scale;
};

void add_em_options(CLI::App* cmd, EmFlags& flags) {
  cmd->add_option("--max-iter", flags.max_iter, "EM iteration cap")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--tol", flags.tol, "relative log likelihood convergence tolerance")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--restarts", flags.restarts, "number of random restarts")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--burn-iters", flags.burn_iters,
                  "short-run iterations used to score each restart")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--psi-floor-scale", flags.psi_floor_scale,
                  "uniqueness floor as a fraction of the pooled variance")
      ->check(CLI::NonNegativeNumber);
}

fmatch::EMConfig em_config(const EmFlags& flags, std::uint64_t seed) {
  fmatch::EMConfig config;
  config.max_iter = flags.max_iter;
  config.tol = flags.tol;
  config.restarts = flags.restarts;
  config.burn_iters = flags.burn_iters;
  config.psi_floor_scale = flags.psi_floor_scale;
  config.seed = seed;
  return config;
}

fmatch::Centering parse_centering(const std::string& name) {
  if (name == "per-dataset") return fmatch::Centering::PerDataset;
  if (name == "pooled-x") return fmatch::Centering::PooledX;
  throw std::invalid_argument("unknown centering mode: " + name);
}

fmatch::Scaling parse_scaling(const std::string& name) {
  if (name == "none") return fmatch::Scaling::None;
  if (name == "unit-variance") return fmatch::Scaling::UnitVariance;
  throw std::invalid_argument("unknown scaling mode: " + name);
}

std::vector<fmatch::Method> parse_methods(const std::string& list) {
  std::vector<fmatch::Method> out;
  std::stringstream stream(list);
  std::string item;
  while (std::getline(stream, item, ','))
    if (!item.empty()) out.push_back(fmatch::parse_method(item));
  if (out.empty()) throw std::invalid_argument("no methods requested");
  return out;
}

// check: degrees of freedom counts and rank diagnostics for a partition or a
// fitted model.
struct CheckArgs {
  int p_x = 0, p_y = 0, p_z = 0;
  int q = -1;
  std::string model_path;
  std::string csv_path;
};

int run_check(const CheckArgs& args) {
  fmatch::PartitionSpec part;
  int q = args.q;
  std::optional<fmatch::IdentifiabilityReport> report;
  if (!args.model_path.empty()) {
    const fmatch::StoredModel stored = fmatch::load_model(args.model_path);
    part = stored.model.partition;
    if (q >= 0 && q != stored.model.q())
      throw std::invalid_argument("--q disagrees with the stored model");
    q = stored.model.q();
    report = fmatch::assess_identifiability(stored.model);
  } else {
    part.p_x = args.p_x;
    part.p_y = args.p_y;
    part.p_z = args.p_z;
    part.validate();
    if (q < 0) throw std::invalid_argument("--q is required without --model");
    report = fmatch::assess_identifiability(part, q);
  }

  const int max_q_c = fmatch::max_factors(part.p_x, part.p_y, part.p_z,
                                          fmatch::MaxFactorsCriterion::CompleteDof);
  const int max_q_cm = fmatch::max_factors(part.p_x, part.p_y, part.p_z,
                                           fmatch::MaxFactorsCriterion::MatchingDof);
  const int max_q_a2 = fmatch::max_factors(part.p_x, part.p_y, part.p_z,
                                           fmatch::MaxFactorsCriterion::Assumption2);
  std::ostringstream text;
  text << "partition: p_X=" << part.p_x << " p_Y=" << part.p_y << " p_Z=" << part.p_z
       << " (p=" << part.p() << ")\n"
       << "factors: q=" << q << "\n"
       << "complete-data degrees of freedom: " << report->dof_complete
       << " (nonnegative: " << yes_no(report->dof_complete >= 0)
       << ", max q: " << max_q_c << ")\n"
       << "matching degrees of freedom: " << report->dof_matching
       << " (nonnegative: " << yes_no(report->dof_matching >= 0)
       << ", max q: " << max_q_cm << ")\n"
       << "shared-block rank condition (dimension): "
       << yes_no(report->assumption1_dim_ok) << "\n"
       << "row-deletion rank condition (dimension): "
       << yes_no(report->assumption2_dim_ok) << " (max q: " << max_q_a2
       << ")\n";
  if (!args.model_path.empty()) {
    text << "shared-block rank condition (numeric): "
         << tri_state(report->numeric_assumption1) << "\n"
         << "row-deletion rank condition (numeric): "
         << tri_state(report->numeric_assumption2) << "\n";
  }
  std::cout << text.str();

  if (!args.csv_path.empty()) {
    std::string csv =
        "p_x,p_y,p_z,q,dof_complete,dof_matching,assumption1_dim,assumption2_dim,"
        "max_q_complete,max_q_matching,max_q_row_deletion\n";
    csv += std::to_string(part.p_x) + "," + std::to_string(part.p_y) + "," +
           std::to_string(part.p_z) + "," + std::to_string(q) + "," +
           std::to_string(report->dof_complete) + "," +
           std::to_string(report->dof_matching) + "," +
           std::string(report->assumption1_dim_ok ? "1" : "0") + "," +
           std::string(report->assumption2_dim_ok ? "1" : "0") + "," +
           std::to_string(max_q_c) + "," + std::to_string(max_q_cm) + "," +
           std::to_string(max_q_a2) + "\n";
    fmatch::write_text_file(args.csv_path, csv);
  }
  return 0;
}

// fit: estimate a factor model from two partially overlapping datasets.
struct FitArgs {
  std::string path_a, path_b;
  std::vector<std::string> shared;
  int q = 1;
  std::string centering = "per-dataset";
  std::string scaling = "none";
  std::string init_path;
  std::string out_path;
  std::string trace_path;
  std::string yz_path;
  EmFlags em;
  std::uint64_t seed = kDefaultSeed;
};

int run_fit(const FitArgs& args) {
  const fmatch::DatasetPair pair =
      fmatch::load_pair(args.path_a, args.path_b, args.shared);
  const fmatch::ObservedScatter scatter = fmatch::to_scatter(
      pair, parse_centering(args.centering), parse_scaling(args.scaling));

  fmatch::EMConfig config = em_config(args.em, args.seed);
  if (!args.init_path.empty())
    config.initial_model = fmatch::load_model(args.init_path).model;

  const fmatch::FitReport report = fmatch::fit(scatter, args.q, config);

  std::cout << "n_A=" << scatter.n_a << " n_B=" << scatter.n_b
            << " p=" << pair.partition.p() << " q=" << args.q << "\n"
            << "log likelihood: " << fmatch::format_double(report.final_loglik)
            << "\n"
            << "iterations: " << report.iterations
            << " converged: " << yes_no(report.converged)
            << " best restart: " << report.best_restart << "\n";

  if (!args.out_path.empty()) {
    fmatch::StoredModel stored;
    stored.model = report.model;
    stored.loglik = report.final_loglik;
    stored.converged = report.converged;
    stored.seed = report.seed;
    fmatch::save_model(stored, args.out_path);
  }
  if (!args.trace_path.empty()) {
    std::string csv = "iteration,loglik\n";
    for (std::size_t i = 0; i < report.loglik_trace.size(); ++i)
      csv += std::to_string(i + 1) + "," +
             fmatch::format_double(report.loglik_trace[i]) + "\n";
    fmatch::write_text_file(args.trace_path, csv);
  }
  if (!args.yz_path.empty()) {
    const fmatch::PartialCovariance implied = fmatch::implied_covariance(report.model);
    const auto labels = block_labels(pair.partition);
    const std::vector<std::string> y_names(
        labels.begin() + pair.partition.y_offset(),
        labels.begin() + pair.partition.y_offset() + pair.partition.p_y);
    const std::vector<std::string> z_names(
        labels.begin() + pair.partition.z_offset(),
        labels.begin() + pair.partition.z_offset() + pair.partition.p_z);
    emit(args.yz_path, matrix_csv(*implied.yz, z_names, y_names));
  }
  return 0;
}

// complete: produce the unobserved cross block from a stored model, or from
// covariance blocks via a fresh fit or a direct low-rank completion.
struct CompleteArgs {
  std::string model_path;
  std::string blocks_path;
  std::string mode = "em";
  int q = -1;
  std::vector<double> psi;
  std::string out_path;
  EmFlags em;
  std::uint64_t seed = kDefaultSeed;
};

int run_complete(const CompleteArgs& args) {
  Matrix yz;
  fmatch::PartitionSpec part;

  if (!args.model_path.empty()) {
    const fmatch::StoredModel stored = fmatch::load_model(args.model_path);
    part = stored.model.partition;
    yz = stored.model.loadings_y() * stored.model.loadings_z().transpose();
  } else if (!args.blocks_path.empty()) {
    const fmatch::CovarianceBlocks loaded = fmatch::load_blocks(args.blocks_path);
    const fmatch::PartialCovariance& blocks = loaded.blocks;
    part = blocks.partition;
    if (args.q < 1) throw std::invalid_argument("--q is required with --blocks");

    if (args.mode == "em") {
      const fmatch::ObservedScatter scatter = fmatch::ObservedScatter::create(
          part, blocks.marginal_a() * static_cast<double>(loaded.n_a),
          blocks.marginal_b() * static_cast<double>(loaded.n_b), loaded.n_a,
          loaded.n_b);
      const fmatch::FitReport report =
          fmatch::fit(scatter, args.q, em_config(args.em, args.seed));
      yz = report.model.loadings_y() * report.model.loadings_z().transpose();
      std::cout << "log likelihood: "
                << fmatch::format_double(report.final_loglik)
                << " converged: " << yes_no(report.converged) << "\n";
    } else if (args.mode == "gram") {
      if (args.psi.empty())
        throw std::invalid_argument("--psi is required in gram mode");
      Vector psi;
      if (args.psi.size() == 1)
        psi = Vector::Constant(part.p(), args.psi.front());
      else if (static_cast<Eigen::Index>(args.psi.size()) == part.p())
        psi = Eigen::Map<const Vector>(args.psi.data(),
                                       static_cast<Eigen::Index>(args.psi.size()));
      else
        throw std::invalid_argument("--psi needs 1 or p values");
      if ((psi.array() < 0).any())
        throw std::invalid_argument("--psi values must be nonnegative");

      fmatch::PartialCovariance gram = blocks;
      gram.xx.diagonal() -= psi.head(part.p_x);
      gram.yy.diagonal() -= psi.segment(part.y_offset(), part.p_y);
      gram.zz.diagonal() -= psi.tail(part.p_z);
      gram.yz.reset();
      yz = fmatch::complete_gram(gram, args.q);
    } else {
      throw std::invalid_argument("unknown completion mode: " + args.mode);
    }
  } else {
    throw std::invalid_argument("complete needs --model or --blocks");
  }

  const auto labels = block_labels(part);
  const std::vector<std::string> y_names(labels.begin() + part.y_offset(),
                                         labels.begin() + part.y_offset() + part.p_y);
  const std::vector<std::string> z_names(labels.begin() + part.z_offset(),
                                         labels.begin() + part.z_offset() + part.p_z);
  emit(args.out_path, matrix_csv(yz, z_names, y_names));
  return 0;
}

// select-q: profile the number of factors by BIC.
struct SelectArgs {
  std::string path_a, path_b;
  std::vector<std::string> shared;
  int q_min = 1;
  int q_max = 1;
  std::string centering = "per-dataset";
  std::string scaling = "none";
  std::string out_path;
  EmFlags em;
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
};

int run_select(const SelectArgs& args) {
  const fmatch::DatasetPair pair =
      fmatch::load_pair(args.path_a, args.path_b, args.shared);
  const fmatch::ObservedScatter scatter = fmatch::to_scatter(
      pair, parse_centering(args.centering), parse_scaling(args.scaling));

  const fmatch::BICTable table = fmatch::select_q(
      scatter, args.q_min, args.q_max, em_config(args.em, args.seed), args.threads);

  emit(args.out_path, table.to_csv());
  if (!args.out_path.empty() && args.out_path != "-") std::cout << table.to_csv();
  std::cout << "selected q: " << table.selected_q << "\n";
  return 0;
}

// simulate: draw a factor model and a pair of partially observed datasets.
struct SimulateArgs {
  fmatch::SimDesign design;
  std::string out_a = "a.csv", out_b = "b.csv";
  std::string model_path;
  std::string sigma_path;
  std::uint64_t seed = kDefaultSeed;
};

int run_simulate(const SimulateArgs& args) {
  fmatch::SimDesign design = args.design;
  design.seed = args.seed;
  design.validate();
  const fmatch::FactorModel model = fmatch::sample_model(design).model;
  const fmatch::SampledDatasets data = fmatch::sample_datasets(
      model, design.n_a, design.n_b, fmatch::Rng::mix(args.seed, 1));

  const fmatch::PartitionSpec& part = model.partition;
  const auto labels = block_labels(part);
  const std::vector<std::string> a_names(labels.begin(),
                                         labels.begin() + part.p_a());
  std::vector<std::string> b_names(labels.begin(), labels.begin() + part.p_x);
  b_names.insert(b_names.end(), labels.begin() + part.z_offset(), labels.end());

  fmatch::write_text_file(args.out_a, matrix_csv(data.data_a, a_names, {}));
  fmatch::write_text_file(args.out_b, matrix_csv(data.data_b, b_names, {}));
  std::cout << "wrote " << args.out_a << " (" << design.n_a << " rows) and "
            << args.out_b << " (" << design.n_b << " rows)\n";

  if (!args.model_path.empty()) {
    fmatch::StoredModel stored;
    stored.model = model;
    stored.loglik = 0.0;
    stored.converged = true;
    stored.seed = args.seed;
    fmatch::save_model(stored, args.model_path);
  }
  if (!args.sigma_path.empty()) {
    const Matrix sigma = fmatch::implied_sigma(model);
    fmatch::write_text_file(args.sigma_path, matrix_csv(sigma, labels, labels));
  }
  return 0;
}

// benchmark: permutation study comparing estimators of the unobserved block.
struct BenchmarkArgs {
  std::string data_path;
  long n_a = 0, n_b = 0;
  int p_x = 0, p_y = 0, p_z = 0;
  int q_true = -1;
  bool standardize = true;
  int q = -1;
  int perms = 20;
  std::string methods =
      "fm,cia,als,softimpute,svdimpute,complete";
  std::string out_path;
  std::string summary_path;
  std::string plot_path;
  EmFlags em;
  std::uint64_t seed = kDefaultSeed;
};

int run_benchmark(const BenchmarkArgs& args) {
  Matrix complete;
  fmatch::PartitionSpec part;
  long n_a = args.n_a, n_b = args.n_b;
  int q = args.q;

  if (!args.data_path.empty()) {
    const fmatch::NamedMatrix table = fmatch::load_csv_matrix(args.data_path);
    complete = table.values;
    part.p_x = args.p_x;
    part.p_y = args.p_y;
    part.p_z = args.p_z;
    part.validate();
    if (part.p() != complete.cols())
      throw std::invalid_argument("partition does not cover the data columns");
    if (n_a <= 0) throw std::invalid_argument("--na is required with --data");
    if (n_b <= 0) n_b = complete.rows() - n_a;
    if (n_a + n_b != complete.rows())
      throw std::invalid_argument("--na and --nb must sum to the row count");
    if (q < 1) throw std::invalid_argument("--q is required with --data");
  } else {
    if (n_a <= 0 || n_b <= 0)
      throw std::invalid_argument("--na and --nb must be positive");
    fmatch::SimDesign design;
    design.partition.p_x = args.p_x;
    design.partition.p_y = args.p_y;
    design.partition.p_z = args.p_z;
    design.q_true = args.q_true < 1 ? 1 : args.q_true;
    design.n_a = static_cast<int>(n_a);
    design.n_b = static_cast<int>(n_b);
    design.standardize = args.standardize;
    design.seed = args.seed;
    design.validate();
    const fmatch::FactorModel model = fmatch::sample_model(design).model;
    part = model.partition;
    complete = fmatch::sample_complete(model, static_cast<int>(n_a + n_b),
                                       fmatch::Rng::mix(args.seed, 1));
    if (q < 1) q = design.q_true;
  }

  fmatch::BenchmarkConfig config;
  config.methods = parse_methods(args.methods);
  config.q = q;
  config.n_perms = args.perms;
  config.seed = fmatch::Rng::mix(args.seed, 2);
  config.em = em_config(args.em, 0);

  const fmatch::BenchmarkResult result = fmatch::run_permutation_benchmark(
      complete, static_cast<int>(n_a), part, config);

  if (!args.out_path.empty())
    fmatch::write_text_file(args.out_path, result.records_csv());
  if (!args.summary_path.empty())
    fmatch::write_text_file(args.summary_path, result.summary_csv());
  for (const auto& summary : result.summaries)
    std::cout << fmatch::method_tag(summary.method)
              << ": n_ok=" << summary.n_ok
              << " median_mse=" << fmatch::format_double(summary.median_mse)
              << " iqr=" << fmatch::format_double(summary.iqr) << "\n";

  if (!args.plot_path.empty()) {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> samples;
    for (const auto method : config.methods) {
      std::vector<double> values;
      for (const auto& record : result.records)
        if (record.method == method && !record.failed)
          values.push_back(record.mse);
      if (values.empty()) continue;
      labels.push_back(fmatch::method_tag(method));
      samples.push_back(std::move(values));
    }
    fmatch::write_text_file(
        args.plot_path,
        fmatch::render_boxplot_svg(labels, samples,
                                   "cross-block mean squared error"));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"factor model estimation for statistically matched files"};
  app.require_subcommand(1);

  try {
    std::uint64_t seed = initial_seed();

    app.add_option("--seed", seed, "random seed (env FACTORMATCH_SEED overrides the default)")
        ->capture_default_str();
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    app.add_option("--threads", threads, "worker thread cap")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    CheckArgs check;
    CLI::App* cmd_check =
        app.add_subcommand("check", "identifiability diagnostics for a partition")->fallthrough();
    cmd_check->add_option("--px", check.p_x, "shared variables");
    cmd_check->add_option("--py", check.p_y, "variables seen only in file A");
    cmd_check->add_option("--pz", check.p_z, "variables seen only in file B");
    cmd_check->add_option("--q", check.q, "number of factors");
    cmd_check->add_option("--model", check.model_path, "stored model JSON");
    cmd_check->add_option("--csv", check.csv_path, "write the report as CSV");

    FitArgs fit;
    CLI::App* cmd_fit = app.add_subcommand("fit", "fit a factor model to two files")->fallthrough();
    cmd_fit->add_option("--a", fit.path_a, "CSV observing the shared and Y blocks")
        ->required();
    cmd_fit->add_option("--b", fit.path_b, "CSV observing the shared and Z blocks")
        ->required();
    cmd_fit->add_option("--shared", fit.shared, "shared column names")->delimiter(',');
    cmd_fit->add_option("--q", fit.q, "number of factors")
        ->required()
        ->check(CLI::PositiveNumber);
    cmd_fit->add_option("--centering", fit.centering, "per-dataset or pooled-x")
        ->capture_default_str();
    cmd_fit->add_option("--scaling", fit.scaling, "none or unit-variance")
        ->capture_default_str();
    cmd_fit->add_option("--init", fit.init_path, "warm start from a stored model");
    cmd_fit->add_option("--out", fit.out_path, "write the fitted model JSON");
    cmd_fit->add_option("--trace-out", fit.trace_path, "write the log likelihood trace");
    cmd_fit->add_option("--yz-out", fit.yz_path, "write the implied cross block CSV");
    add_em_options(cmd_fit, fit.em);

    CompleteArgs complete;
    CLI::App* cmd_complete =
        app.add_subcommand("complete", "recover the unobserved cross block")->fallthrough();
    cmd_complete->add_option("--model", complete.model_path, "stored model JSON");
    cmd_complete->add_option("--blocks", complete.blocks_path,
                             "observed covariance blocks JSON");
    cmd_complete->add_option("--mode", complete.mode, "em or gram")
        ->capture_default_str();
    cmd_complete->add_option("--q", complete.q, "number of factors");
    cmd_complete->add_option("--psi", complete.psi,
                             "uniquenesses to subtract in gram mode (1 or p values)")
        ->delimiter(',');
    cmd_complete->add_option("--out", complete.out_path, "output CSV (default stdout)");
    add_em_options(cmd_complete, complete.em);

    SelectArgs select;
    CLI::App* cmd_select =
        app.add_subcommand("select-q", "profile the number of factors by BIC")->fallthrough();
    cmd_select->add_option("--a", select.path_a, "CSV observing the shared and Y blocks")
        ->required();
    cmd_select->add_option("--b", select.path_b, "CSV observing the shared and Z blocks")
        ->required();
    cmd_select->add_option("--shared", select.shared, "shared column names")
        ->delimiter(',');
    cmd_select->add_option("--q-min", select.q_min, "smallest candidate q")
        ->check(CLI::PositiveNumber);
    cmd_select->add_option("--q-max", select.q_max, "largest candidate q")
        ->required()
        ->check(CLI::PositiveNumber);
    cmd_select->add_option("--centering", select.centering, "per-dataset or pooled-x")
        ->capture_default_str();
    cmd_select->add_option("--scaling", select.scaling, "none or unit-variance")
        ->capture_default_str();
    cmd_select->add_option("--out", select.out_path, "write the BIC table CSV");
    add_em_options(cmd_select, select.em);

    SimulateArgs simulate;
    CLI::App* cmd_simulate =
        app.add_subcommand("simulate", "draw a model and two overlapping files")->fallthrough();
    simulate.design.partition.p_x = 3;
    simulate.design.partition.p_y = 3;
    simulate.design.partition.p_z = 3;
    simulate.design.n_a = 500;
    simulate.design.n_b = 500;
    cmd_simulate->add_option("--px", simulate.design.partition.p_x, "shared variables")
        ->capture_default_str();
    cmd_simulate->add_option("--py", simulate.design.partition.p_y, "A-only variables")
        ->capture_default_str();
    cmd_simulate->add_option("--pz", simulate.design.partition.p_z, "B-only variables")
        ->capture_default_str();
    cmd_simulate->add_option("--q", simulate.design.q_true, "number of factors")
        ->capture_default_str();
    cmd_simulate->add_option("--na", simulate.design.n_a, "rows in file A")
        ->capture_default_str();
    cmd_simulate->add_option("--nb", simulate.design.n_b, "rows in file B")
        ->capture_default_str();
    cmd_simulate
        ->add_flag("--standardize,!--no-standardize", simulate.design.standardize,
                   "rescale the model to unit variances")
        ->capture_default_str();
    cmd_simulate->add_option("--loading-mean", simulate.design.loading_mean)
        ->capture_default_str();
    cmd_simulate->add_option("--loading-sd", simulate.design.loading_sd)
        ->capture_default_str();
    cmd_simulate->add_option("--uniqueness-base", simulate.design.uniqueness_base)
        ->capture_default_str();
    cmd_simulate->add_option("--uniqueness-sd", simulate.design.uniqueness_sd)
        ->capture_default_str();
    cmd_simulate->add_option("--out-a", simulate.out_a, "file A path")
        ->capture_default_str();
    cmd_simulate->add_option("--out-b", simulate.out_b, "file B path")
        ->capture_default_str();
    cmd_simulate->add_option("--model-out", simulate.model_path,
                             "write the generating model JSON");
    cmd_simulate->add_option("--sigma-out", simulate.sigma_path,
                             "write the generating covariance CSV");

    BenchmarkArgs benchmark;
    CLI::App* cmd_benchmark =
        app.add_subcommand("benchmark", "permutation study of cross-block estimators")->fallthrough();
    cmd_benchmark->add_option("--data", benchmark.data_path,
                              "complete CSV to permute and split");
    cmd_benchmark->add_option("--px", benchmark.p_x, "shared variables");
    cmd_benchmark->add_option("--py", benchmark.p_y, "A-only variables");
    cmd_benchmark->add_option("--pz", benchmark.p_z, "B-only variables");
    cmd_benchmark->add_option("--q-true", benchmark.q_true,
                              "factors in the generating model (design mode)");
    cmd_benchmark
        ->add_flag("--standardize,!--no-standardize", benchmark.standardize,
                   "rescale the generating model to unit variances")
        ->capture_default_str();
    cmd_benchmark->add_option("--na", benchmark.n_a, "rows assigned to file A");
    cmd_benchmark->add_option("--nb", benchmark.n_b, "rows assigned to file B");
    cmd_benchmark->add_option("--q", benchmark.q, "rank used by the estimators");
    cmd_benchmark->add_option("--perms", benchmark.perms, "number of permutations")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd_benchmark->add_option("--methods", benchmark.methods, "comma separated list")
        ->capture_default_str();
    cmd_benchmark->add_option("--out", benchmark.out_path, "per-permutation CSV");
    cmd_benchmark->add_option("--summary-out", benchmark.summary_path, "summary CSV");
    cmd_benchmark->add_option("--plot", benchmark.plot_path, "boxplot SVG");
    add_em_options(cmd_benchmark, benchmark.em);

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }

    Eigen::setNbThreads(threads);

    if (cmd_check->parsed()) return run_check(check);
    if (cmd_fit->parsed()) {
      fit.seed = seed;
      return run_fit(fit);
    }
    if (cmd_complete->parsed()) {
      complete.seed = seed;
      return run_complete(complete);
    }
    if (cmd_select->parsed()) {
      select.seed = seed;
      select.threads = threads;
      return run_select(select);
    }
    if (cmd_simulate->parsed()) {
      simulate.seed = seed;
      return run_simulate(simulate);
    }
    if (cmd_benchmark->parsed()) {
      benchmark.seed = seed;
      return run_benchmark(benchmark);
    }
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const fmatch::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
