#include "sunbayes/linalg.hpp"

#include <cmath>

#include "sunbayes/errors.hpp"

namespace sunbayes {

CholResult chol_jittered(const MatrixXd& sym, const JitterOptions& opts,
                         const std::string& context) {
  if (sym.rows() != sym.cols())
    throw DimensionMismatch(context + ": matrix not square");
  const auto n = sym.rows();
  if (n == 0) return {MatrixXd(0, 0), 0.0};
  Eigen::LLT<MatrixXd> llt(sym);
  if (llt.info() == Eigen::Success) return {MatrixXd(llt.matrixL()), 0.0};
  const double scale = sym.trace() / static_cast<double>(n);
  double jitter = opts.start * scale;
  const double max_jitter = opts.max * scale;
  while (jitter <= max_jitter * (1.0 + 1e-12)) {
    MatrixXd bumped = sym;
    bumped.diagonal().array() += jitter;
    llt.compute(bumped);
    if (llt.info() == Eigen::Success) return {MatrixXd(llt.matrixL()), jitter};
    jitter *= opts.factor;
  }
  throw NonPositiveDefinite(context + ": Cholesky failed after jitter ladder");
}

void require_symmetric(const MatrixXd& m, double rel_tol,
                       const std::string& context) {
  if (m.rows() != m.cols())
    throw DimensionMismatch(context + ": matrix not square");
  if (m.rows() == 0) return;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double diff = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (diff > rel_tol * scale)
    throw DimensionMismatch(context + ": matrix not symmetric");
}

double log_det_from_chol(const MatrixXd& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

SdCorr to_correlation(const MatrixXd& cov) {
  SdCorr out;
  out.sd = cov.diagonal().array().sqrt();
  const VectorXd inv = out.sd.array().inverse();
  out.corr = inv.asDiagonal() * cov * inv.asDiagonal();
  out.corr.diagonal().setOnes();
  return out;
}

double log_mvn_pdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov,
                   const JitterOptions& opts) {
  if (x.size() != mean.size() || x.size() != cov.rows())
    throw DimensionMismatch("log_mvn_pdf: dimension mismatch");
  const auto n = x.size();
  if (n == 0) return 0.0;
  const CholResult ch = chol_jittered(cov, opts, "log_mvn_pdf");
  const VectorXd z =
      ch.lower.triangularView<Eigen::Lower>().solve(x - mean);
  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * (z.squaredNorm() + log_det_from_chol(ch.lower) +
                 static_cast<double>(n) * kLog2Pi);
}

MatrixXd block_diag(const std::vector<MatrixXd>& blocks) {
  int total = 0;
  for (const auto& b : blocks) total += static_cast<int>(b.rows());
  MatrixXd out = MatrixXd::Zero(total, total);
  int at = 0;
  for (const auto& b : blocks) {
    const int k = static_cast<int>(b.rows());
    out.block(at, at, k, k) = b;
    at += k;
  }
  return out;
}

std::vector<int> block_offsets(const std::vector<int>& sizes) {
  std::vector<int> offs(sizes.size());
  int at = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    offs[i] = at;
    at += sizes[i];
  }
  return offs;
}

}  // namespace sunbayes
