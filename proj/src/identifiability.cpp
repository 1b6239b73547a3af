#include "fmatch/identifiability.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace fmatch {

long long dof_complete(int p, int q) {
  if (p < 1) throw std::invalid_argument("dof_complete: p must be >= 1");
  if (q < 0 || q >= p)
    throw std::invalid_argument("dof_complete: require 0 <= q < p");
  // (p-q)^2 - p - q = (p-q)(p-q-1) - 2q, a product of consecutive integers
  // minus an even number, so the division by 2 is exact.
  long long d = static_cast<long long>(p) - q;
  return d * (d - 1) / 2 - q;
}

long long dof_matching(int p_x, int p_y, int p_z, int q) {
  if (p_x < 1 || p_y < 1 || p_z < 1)
    throw std::invalid_argument("dof_matching: block sizes must be >= 1");
  return dof_complete(p_x + p_y + p_z, q) -
         static_cast<long long>(p_y) * p_z;
}

bool assumption1_dims_ok(int p_x, int q) { return q <= p_x; }

bool assumption2_dims_ok(int p_x, int p_y, int p_z, int q) {
  return 2 * q < p_x + p_y && 2 * q < p_x + p_z;
}

int max_factors(int p_x, int p_y, int p_z, MaxFactorsCriterion criterion) {
  if (p_x < 1 || p_y < 1 || p_z < 1)
    throw std::invalid_argument("max_factors: block sizes must be >= 1");
  const int p = p_x + p_y + p_z;
  switch (criterion) {
    case MaxFactorsCriterion::CompleteDof:
    case MaxFactorsCriterion::MatchingDof: {
      const bool matching = criterion == MaxFactorsCriterion::MatchingDof;
      int best = 0;  // q = 0 always admissible: C(p,0) = p(p-1)/2 >= p_Y*p_Z
      for (int q = 1; q < p; ++q) {
        long long c = matching ? dof_matching(p_x, p_y, p_z, q)
                               : dof_complete(p, q);
        if (c < 0) break;  // both criteria decrease strictly in q
        best = q;
      }
      return best;
    }
    case MaxFactorsCriterion::Assumption2:
      return std::min({p_x, (p_x + p_y - 1) / 2, (p_x + p_z - 1) / 2});
  }
  throw std::invalid_argument("max_factors: unknown criterion");
}

namespace {

double default_rank_tol(const Matrix& m) {
  return 1e-8 * m.jacobiSvd().singularValues()(0);
}

double smallest_sv(const Matrix& m) {
  return m.jacobiSvd().singularValues().minCoeff();
}

// Enumerates q-row subsets of the rows listed in `avail` in lexicographic
// order, testing each against the cached sigma_min verdicts, and reports
// whether two disjoint good subsets exist.
class SubsetSearch {
 public:
  SubsetSearch(const Matrix& lambda, double tol)
      : lambda_(lambda), tol_(tol), q_(static_cast<int>(lambda.cols())) {}

  bool good(std::uint32_t mask, const std::vector<int>& rows) {
    auto it = cache_.find(mask);
    if (it != cache_.end()) return it->second;
    Matrix sub(q_, q_);
    for (int i = 0; i < q_; ++i) sub.row(i) = lambda_.row(rows[i]);
    bool ok = smallest_sv(sub) > tol_;
    cache_.emplace(mask, ok);
    return ok;
  }

  bool two_disjoint(const std::vector<int>& avail) {
    const int n = static_cast<int>(avail.size());
    if (n < 2 * q_) return false;
    std::vector<std::uint32_t> found;
    std::vector<int> idx(q_);
    for (int i = 0; i < q_; ++i) idx[i] = i;
    std::vector<int> rows(q_);
    while (true) {
      std::uint32_t mask = 0;
      for (int i = 0; i < q_; ++i) {
        rows[i] = avail[idx[i]];
        mask |= 1u << rows[i];
      }
      if (good(mask, rows)) {
        for (std::uint32_t other : found)
          if ((other & mask) == 0) return true;
        found.push_back(mask);
      }
      // next combination
      int i = q_ - 1;
      while (i >= 0 && idx[i] == n - q_ + i) --i;
      if (i < 0) break;
      ++idx[i];
      for (int j = i + 1; j < q_; ++j) idx[j] = idx[j - 1] + 1;
    }
    return false;
  }

 private:
  const Matrix& lambda_;
  double tol_;
  int q_;
  std::unordered_map<std::uint32_t, bool> cache_;
};

}  // namespace

bool check_assumption1_numeric(const Matrix& lambda_x, int q, double tol) {
  if (q < 1) throw std::invalid_argument("check_assumption1_numeric: q >= 1");
  if (lambda_x.rows() < q || lambda_x.cols() < q) return false;
  Eigen::JacobiSVD<Matrix> svd(lambda_x);
  if (tol < 0) tol = 1e-8 * svd.singularValues()(0);
  return svd.singularValues()(q - 1) > tol;
}

std::optional<bool> check_assumption2_numeric(const Matrix& lambda_block,
                                              double tol) {
  const int r = static_cast<int>(lambda_block.rows());
  const int q = static_cast<int>(lambda_block.cols());
  if (q < 1)
    throw std::invalid_argument("check_assumption2_numeric: q >= 1 required");
  if (r > 25) return std::nullopt;  // combinatorial search bound
  if (r < 2 * q + 1) return false;
  if (tol < 0) tol = default_rank_tol(lambda_block);

  SubsetSearch search(lambda_block, tol);
  for (int d = 0; d < r; ++d) {
    std::vector<int> avail;
    avail.reserve(r - 1);
    for (int i = 0; i < r; ++i)
      if (i != d) avail.push_back(i);
    if (!search.two_disjoint(avail)) return false;
  }
  return true;
}

IdentifiabilityReport assess_identifiability(const PartitionSpec& partition,
                                             int q) {
  partition.validate();
  if (q < 0 || q >= partition.p())
    throw std::invalid_argument("assess_identifiability: require 0 <= q < p");
  IdentifiabilityReport rep;
  rep.q = q;
  rep.assumption1_dim_ok = assumption1_dims_ok(partition.p_x, q);
  rep.assumption2_dim_ok =
      assumption2_dims_ok(partition.p_x, partition.p_y, partition.p_z, q);
  rep.dof_complete = dof_complete(partition.p(), q);
  rep.dof_matching =
      dof_matching(partition.p_x, partition.p_y, partition.p_z, q);
  return rep;
}

IdentifiabilityReport assess_identifiability(const FactorModel& model,
                                             double tol) {
  model.validate();
  IdentifiabilityReport rep = assess_identifiability(model.partition, model.q());
  rep.numeric_assumption1 =
      check_assumption1_numeric(model.loadings_x(), model.q(), tol);

  const int q = model.q();
  Matrix lambda_a(model.partition.p_a(), q);
  lambda_a << model.loadings_x(), model.loadings_y();
  Matrix lambda_b(model.partition.p_b(), q);
  lambda_b << model.loadings_x(), model.loadings_z();

  auto a = check_assumption2_numeric(lambda_a, tol);
  auto b = check_assumption2_numeric(lambda_b, tol);
  if ((a && !*a) || (b && !*b))
    rep.numeric_assumption2 = false;
  else if (!a || !b)
    rep.numeric_assumption2 = std::nullopt;
  else
    rep.numeric_assumption2 = true;
  return rep;
}

}  // namespace fmatch
