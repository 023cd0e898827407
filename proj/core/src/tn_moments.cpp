#include <cmath>
#include <limits>
#include <vector>

#include "sunbayes/errors.hpp"
#include "sunbayes/mvn.hpp"
#include "sunbayes/normal.hpp"

namespace sunbayes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// log P(Z >= a) for Z ~ N(0, S).
double region_log_prob(const VectorXd& a, const MatrixXd& cov,
                       const EngineConfig& cfg) {
  TruncNormalSpec spec{a, VectorXd::Zero(a.size()), cov};
  return tmvn_log_prob(spec, cfg);
}

// CDF options tightened for moment assembly: the F terms enter ratios, so
// relative precision is what matters.
EngineConfig tighten(const EngineConfig& cfg) {
  EngineConfig tight = cfg;
  tight.mvn.accuracy = std::min(cfg.mvn.accuracy, 1e-9);
  tight.mvn.rel_accuracy = 1e-5;
  return tight;
}

// Normalized first moment of Z | Z >= a, Z ~ N(0, cov), together with the
// boundary weights F_i = f_i(a_i) P(Z_{-i} >= a_{-i} | Z_i = a_i) / alpha.
struct FirstOrder {
  VectorXd mean;
  VectorXd f;  // boundary weights, zero where a_i = -inf
};

FirstOrder first_order(const VectorXd& a, const MatrixXd& cov,
                       double log_alpha, const EngineConfig& cfg) {
  const int n = static_cast<int>(a.size());
  FirstOrder out;
  out.f = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (a(i) == -kInf) continue;
    const double sd_i = std::sqrt(cov(i, i));
    const double log_fi = log_norm_pdf(a(i) / sd_i) - std::log(sd_i);
    double log_cond = 0.0;
    if (n > 1) {
      VectorXd a_rest(n - 1);
      VectorXd shift(n - 1);
      MatrixXd cond(n - 1, n - 1);
      int r = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        a_rest(r) = a(j);
        shift(r) = cov(j, i) * a(i) / cov(i, i);
        int cidx = 0;
        for (int k = 0; k < n; ++k) {
          if (k == i) continue;
          cond(r, cidx) = cov(j, k) - cov(j, i) * cov(i, k) / cov(i, i);
          ++cidx;
        }
        ++r;
      }
      VectorXd lower = a_rest - shift;
      TruncNormalSpec spec{lower, VectorXd::Zero(n - 1), cond};
      log_cond = tmvn_log_prob(spec, cfg);
    }
    out.f(i) = std::exp(log_fi + log_cond - log_alpha);
  }
  out.mean = cov * out.f;
  return out;
}

}  // namespace

namespace detail {

TnMoments tallis_moments(const VectorXd& a, const MatrixXd& cov,
                         const EngineConfig& cfg_in) {
  const int n = static_cast<int>(a.size());
  const EngineConfig cfg = tighten(cfg_in);
  TnMoments out;
  if (n == 0) {
    out.mean = VectorXd(0);
    out.cov = MatrixXd(0, 0);
    return out;
  }
  if (n == 1) {
    const double sd = std::sqrt(cov(0, 0));
    out.mean = VectorXd(1);
    out.cov = MatrixXd(1, 1);
    if (a(0) == -kInf) {
      out.mean(0) = 0.0;
      out.cov(0, 0) = cov(0, 0);
    } else {
      const double cut = a(0) / sd;
      out.mean(0) = sd * trunc_std_mean_lower(cut);
      out.cov(0, 0) = cov(0, 0) * trunc_std_var_lower(cut);
    }
    return out;
  }

  const double log_alpha = region_log_prob(a, cov, cfg);
  const FirstOrder fo = first_order(a, cov, log_alpha, cfg);
  out.mean = fo.mean;

  // Second moment through one level of conditioning: for each active
  // boundary j, the mean of the remaining coordinates given Z_j = a_j and
  // the residual truncation.
  MatrixXd second = cov;
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l)
      if (a(k) != -kInf && fo.f(k) > 0)
        second(k, l) += a(k) * fo.f(k) * cov(l, k);

  for (int j = 0; j < n; ++j) {
    if (a(j) == -kInf || fo.f(j) == 0.0) continue;
    VectorXd shift(n - 1), lower(n - 1);
    MatrixXd cond(n - 1, n - 1);
    int r = 0;
    std::vector<int> idx;
    idx.reserve(n - 1);
    for (int i = 0; i < n; ++i) {
      if (i == j) continue;
      idx.push_back(i);
      shift(r) = cov(i, j) * a(j) / cov(j, j);
      lower(r) = a(i) == -kInf ? -kInf : a(i) - shift(r);
      int cidx = 0;
      for (int k = 0; k < n; ++k) {
        if (k == j) continue;
        cond(r, cidx) = cov(i, k) - cov(i, j) * cov(j, k) / cov(j, j);
        ++cidx;
      }
      ++r;
    }
    // Mean of the (n-1)-dim truncated conditional.
    FirstOrder sub;
    if (n - 1 == 1) {
      sub.mean = VectorXd(1);
      if (lower(0) == -kInf) {
        sub.mean(0) = 0.0;
      } else {
        const double sd = std::sqrt(cond(0, 0));
        sub.mean(0) = sd * trunc_std_mean_lower(lower(0) / sd);
      }
    } else {
      const double log_sub = region_log_prob(lower, cond, cfg);
      sub = first_order(lower, cond, log_sub, cfg);
    }
    for (int r2 = 0; r2 < n - 1; ++r2) {
      const int k = idx[r2];
      const double mm_k = shift(r2) + sub.mean(r2);
      for (int l = 0; l < n; ++l) second(k, l) += cov(l, j) * fo.f(j) * mm_k;
    }
  }

  second = 0.5 * (second + second.transpose()).eval();
  out.cov = second - out.mean * out.mean.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  for (int i = 0; i < n; ++i) out.cov(i, i) = std::max(out.cov(i, i), 0.0);
  return out;
}

}  // namespace detail

TnMoments tn_moments(const TruncNormalSpec& spec, const EngineConfig& cfg) {
  const int n = static_cast<int>(spec.lower.size());
  if (spec.mean.size() != n || spec.cov.rows() != n || spec.cov.cols() != n)
    throw DimensionMismatch("tn_moments: dimensions disagree");
  if (n > cfg.tn_moment_cap)
    throw MomentDimExceeded("tn_moments: dim exceeds moment-dim cap");
  require_symmetric(spec.cov, 1e-10, "tn_moments");
  if (n > 0) {
    const double lp = tmvn_log_prob(spec, cfg);
    if (lp < cfg.tmvn.min_log_prob)
      throw RegionTooImprobable("tn_moments: region probability below floor");
  }
  VectorXd a(n);
  for (int i = 0; i < n; ++i)
    a(i) = spec.lower(i) == -kInf ? -kInf : spec.lower(i) - spec.mean(i);
  TnMoments centered = detail::tallis_moments(a, spec.cov, cfg);
  centered.mean += spec.mean;
  return centered;
}

}  // namespace sunbayes
