#include "sov_internal.hpp"

#include <cmath>
#include <limits>

namespace sunbayes::detail {

SovProblem sov_prepare(VectorXd upper, MatrixXd sym) {
  const int n = static_cast<int>(upper.size());
  SovProblem out;
  out.lower_chol = MatrixXd::Zero(n, n);
  out.perm.resize(n);
  for (int i = 0; i < n; ++i) out.perm[i] = i;

  MatrixXd& llt = out.lower_chol;
  VectorXd y = VectorXd::Zero(n);
  constexpr double kVarFloor = 1e-14;

  for (int i = 0; i < n; ++i) {
    // Pick the remaining variable with the smallest conditional probability,
    // plugging in the truncated means of the already-fixed coordinates.
    int best = i;
    double best_log_p = std::numeric_limits<double>::infinity();
    for (int j = i; j < n; ++j) {
      double var = sym(j, j);
      double num = upper(j);
      for (int k = 0; k < i; ++k) {
        var -= llt(j, k) * llt(j, k);
        num -= llt(j, k) * y(k);
      }
      var = std::max(var, kVarFloor);
      const double c = num / std::sqrt(var);
      const double log_p = log_norm_cdf(c);
      if (log_p < best_log_p) {
        best_log_p = log_p;
        best = j;
      }
    }
    if (best != i) {
      sym.row(i).swap(sym.row(best));
      sym.col(i).swap(sym.col(best));
      std::swap(upper(i), upper(best));
      std::swap(out.perm[i], out.perm[best]);
      for (int k = 0; k < i; ++k) std::swap(llt(i, k), llt(best, k));
    }
    double var = sym(i, i);
    double num = upper(i);
    for (int k = 0; k < i; ++k) {
      var -= llt(i, k) * llt(i, k);
      num -= llt(i, k) * y(k);
    }
    var = std::max(var, kVarFloor);
    const double di = std::sqrt(var);
    llt(i, i) = di;
    const double c = num / di;
    // E[Z | Z <= c]; stays stable for c far in either tail.
    y(i) = -norm_hazard(-c);
    for (int j = i + 1; j < n; ++j) {
      double v = sym(j, i);
      for (int k = 0; k < i; ++k) v -= llt(j, k) * llt(i, k);
      llt(j, i) = v / di;
    }
  }
  out.upper = upper;
  return out;
}

std::vector<double> lattice_generators(int m) {
  std::vector<double> gens;
  gens.reserve(m);
  int candidate = 2;
  while (static_cast<int>(gens.size()) < m) {
    bool prime = true;
    for (int d = 2; d * d <= candidate; ++d) {
      if (candidate % d == 0) {
        prime = false;
        break;
      }
    }
    if (prime) {
      double frac = std::sqrt(static_cast<double>(candidate));
      frac -= std::floor(frac);
      gens.push_back(frac);
    }
    ++candidate;
  }
  return gens;
}

}  // namespace sunbayes::detail
