#include "fmatch/model_selection.hpp"

#include "fmatch/identifiability.hpp"
#include "fmatch/util.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace fmatch {

long long free_parameters(int p, int q) {
  if (p < 1 || q < 0 || q > p)
    throw std::invalid_argument("free_parameters: require 0 <= q <= p");
  return static_cast<long long>(q) * p + p -
         static_cast<long long>(q) * (q - 1) / 2;
}

double bic_complete(double loglik, int p, int q, double n) {
  if (!(n >= 1.0)) throw std::invalid_argument("bic_complete: n >= 1");
  return -2.0 * loglik +
         static_cast<double>(free_parameters(p, q)) * std::log(n);
}

std::string BICTable::to_csv() const {
  std::string out = "q,loglik,free_params,bic,feasible_C,feasible_CM,feasible_A2,selected\n";
  for (const BICRow& row : rows) {
    out += std::to_string(row.q);
    out += ',';
    out += row.failed ? "nan" : format_double(row.loglik);
    out += ',';
    out += std::to_string(row.free_params);
    out += ',';
    out += row.failed ? "nan" : format_double(row.bic);
    out += ',';
    out += row.feasible_c ? '1' : '0';
    out += ',';
    out += row.feasible_cm ? '1' : '0';
    out += ',';
    out += row.feasible_a2 ? '1' : '0';
    out += ',';
    out += (!row.failed && row.q == selected_q) ? '1' : '0';
    out += '\n';
  }
  return out;
}

BICTable select_q(const ObservedScatter& scatter, int q_min, int q_max,
                  const EMConfig& config, int n_threads) {
  const PartitionSpec& part = scatter.partition;
  const int p = part.p();
  if (q_min < 1 || q_min > q_max || q_max > p)
    throw std::invalid_argument("select_q: require 1 <= q_min <= q_max <= p");
  config.validate();

  const int n_rows = q_max - q_min + 1;
  std::vector<BICRow> rows(n_rows);
  const double n = scatter.n();

  auto fit_row = [&](int i) {
    BICRow& row = rows[i];
    const int q = q_min + i;
    row.q = q;
    row.free_params = free_parameters(p, q);
    row.feasible_c = q < p && dof_complete(p, q) >= 0;
    row.feasible_cm = q < p && dof_matching(part.p_x, part.p_y, part.p_z, q) >= 0;
    row.feasible_a2 = assumption1_dims_ok(part.p_x, q) &&
                      assumption2_dims_ok(part.p_x, part.p_y, part.p_z, q);
    try {
      FitReport report = fit(scatter, q, config);
      row.loglik = report.final_loglik;
      row.converged = report.converged;
      row.bic = bic_complete(row.loglik, p, q, n);
      row.iterations = report.iterations;
      row.trace_monotone = report.trace_monotone();
      row.worst_trace_step = report.worst_trace_step();
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  };

  if (n_threads <= 1 || n_rows == 1) {
    for (int i = 0; i < n_rows; ++i) fit_row(i);
  } else {
    const int workers = std::min(n_threads, n_rows);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int i = w; i < n_rows; i += workers) fit_row(i);
      });
    for (auto& t : pool) t.join();
  }

  BICTable table;
  table.rows = std::move(rows);
  for (const BICRow& row : table.rows) {
    if (row.failed) continue;
    if (table.selected_q < 0) {
      table.selected_q = row.q;
      continue;
    }
    const BICRow& best =
        table.rows[static_cast<std::size_t>(table.selected_q - q_min)];
    if (row.bic < best.bic) table.selected_q = row.q;  // ties keep smaller q
  }
  return table;
}

}  // namespace fmatch
