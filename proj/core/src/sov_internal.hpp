#pragma once

// Shared internals for the separation-of-variables machinery: greedy
// variable reordering fused with the Cholesky factorization, and the
// randomly shifted lattice rule driving the QMC integration.

#include <vector>

#include "sunbayes/linalg.hpp"
#include "sunbayes/normal.hpp"

namespace sunbayes::detail {

// Reordered sequential representation of P(Z <= upper), Z ~ N(0, S):
// Z = L * E with E standard normal and E_i constrained to
// (-inf, (upper_i - sum_{j<i} L_ij e_j) / L_ii].
struct SovProblem {
  MatrixXd lower_chol;
  VectorXd upper;
  std::vector<int> perm;  // perm[i] = original index now at position i
};

// Greedy smallest-conditional-probability-first ordering, computed inside
// the Cholesky sweep. `sym` must already be positive definite (jitter is
// applied by the caller).
SovProblem sov_prepare(VectorXd upper, MatrixXd sym);

// frac(sqrt(p)) generators for the first `m` primes.
std::vector<double> lattice_generators(int m);

}  // namespace sunbayes::detail
