#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sunbayes/config.hpp"

namespace sunbayes {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Lower Cholesky factor of a symmetric matrix, adding jitter on the ladder
// configured in JitterOptions when plain factorization fails. Throws
// NonPositiveDefinite once the ladder is exhausted.
struct CholResult {
  MatrixXd lower;
  double jitter = 0.0;  // absolute jitter that was added to the diagonal
};
CholResult chol_jittered(const MatrixXd& sym, const JitterOptions& opts,
                         const std::string& context);

// Throws DimensionMismatch unless `m` is symmetric within `rel_tol`.
void require_symmetric(const MatrixXd& m, double rel_tol,
                       const std::string& context);

double log_det_from_chol(const MatrixXd& lower);

// Splits an SPD matrix into sd vector and correlation matrix: S = d C d.
struct SdCorr {
  VectorXd sd;
  MatrixXd corr;
};
SdCorr to_correlation(const MatrixXd& cov);

// log N(x; mean, cov) for SPD cov.
double log_mvn_pdf(const VectorXd& x, const VectorXd& mean,
                   const MatrixXd& cov, const JitterOptions& opts = {});

// Assembles a dense block-diagonal matrix.
MatrixXd block_diag(const std::vector<MatrixXd>& blocks);

// Offsets of consecutive blocks given their sizes.
std::vector<int> block_offsets(const std::vector<int>& sizes);

}  // namespace sunbayes
