#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sov_internal.hpp"
#include "sunbayes/errors.hpp"
#include "sunbayes/mvn.hpp"
#include "sunbayes/normal.hpp"

namespace sunbayes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// phi(t) / Phi(t): the accept-reject machinery works in the
// upper-truncated convention Z <= c, whose truncated mean is -R(c).
double ratio_upper(double t) { return norm_hazard(-t); }

// Saddle point of the sequential exponentially tilted proposal for
// W ~ N(0, S) restricted to W <= b, in the reordered Cholesky frame.
// Unknowns are the reference path w_{1..n-1} and tilts mu_{1..n-1}.
struct Tilt {
  VectorXd mu;       // length n, mu(n-1) = 0
  VectorXd path;     // saddle path, length n (last entry unused)
  double log_bound;  // psi at the saddle: sup over the region of log weight
  bool solved = false;
};

double psi_value(const detail::SovProblem& prob, const VectorXd& w,
                 const VectorXd& mu) {
  const int n = static_cast<int>(prob.upper.size());
  const MatrixXd& lo = prob.lower_chol;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double num = prob.upper(i);
    for (int k = 0; k < i; ++k) num -= lo(i, k) * w(k);
    const double ut = num / lo(i, i);
    acc += log_norm_cdf(ut - mu(i)) + 0.5 * mu(i) * mu(i) - mu(i) * w(i);
  }
  return acc;
}

Tilt solve_tilt(const detail::SovProblem& prob) {
  const int n = static_cast<int>(prob.upper.size());
  const MatrixXd& lo = prob.lower_chol;
  Tilt tilt;
  tilt.mu = VectorXd::Zero(n);
  tilt.path = VectorXd::Zero(n);
  if (n == 1) {
    tilt.log_bound = log_norm_cdf(prob.upper(0) / lo(0, 0));
    tilt.solved = true;
    return tilt;
  }
  const int m = n - 1;

  // Start from the plain sequential expected path.
  VectorXd w = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    double num = prob.upper(i);
    for (int k = 0; k < i; ++k) num -= lo(i, k) * w(k);
    const double ut = num / lo(i, i);
    if (i < m) w(i) = -ratio_upper(ut);
  }
  VectorXd mu = VectorXd::Zero(n);

  // Residuals: F1_i = w_i - mu_i + R(ut_i - mu_i), i < m
  //            F2_j = mu_j + sum_{i>j} R(ut_i - mu_i) L_ij / L_ii, j < m
  VectorXd ut(n), ratio(n), dratio(n);
  auto refresh = [&](const VectorXd& wv, const VectorXd& muv) {
    for (int i = 0; i < n; ++i) {
      double num = prob.upper(i);
      for (int k = 0; k < i; ++k) num -= lo(i, k) * wv(k);
      ut(i) = num / lo(i, i) - muv(i);
      ratio(i) = ratio_upper(ut(i));
      // d/dt of R = phi/Phi is -R (t + R); unconstrained rows contribute
      // nothing (R -> 0 faster than t grows).
      dratio(i) = ratio(i) == 0.0 ? 0.0 : -ratio(i) * (ut(i) + ratio(i));
    }
  };
  auto residual = [&](const VectorXd& wv, const VectorXd& muv, VectorXd& f) {
    refresh(wv, muv);
    for (int i = 0; i < m; ++i) f(i) = wv(i) - muv(i) + ratio(i);
    for (int j = 0; j < m; ++j) {
      double acc = muv(j);
      for (int i = j + 1; i < n; ++i)
        acc += ratio(i) * lo(i, j) / lo(i, i);
      f(m + j) = acc;
    }
  };

  VectorXd f(2 * m), f_try(2 * m);
  residual(w, mu, f);
  double fn = f.norm();
  MatrixXd jac(2 * m, 2 * m);
  for (int it = 0; it < 120 && fn > 1e-10; ++it) {
    // refresh() state matches (w, mu) after the residual call above.
    jac.setZero();
    for (int i = 0; i < m; ++i) {
      // dF1_i/dw_j: delta_ij + R'_i * d(ut_i)/dw_j, with
      // d(ut_i)/dw_j = -L_ij / L_ii for j < i.
      jac(i, i) += 1.0;
      for (int j = 0; j < std::min(i, m); ++j)
        jac(i, j) += dratio(i) * (-lo(i, j) / lo(i, i));
      // dF1_i/dmu_i = -1 + R'_i * (-1)
      jac(i, m + i) = -1.0 - dratio(i);
    }
    for (int j = 0; j < m; ++j) {
      jac(m + j, m + j) += 1.0;
      for (int i = j + 1; i < n; ++i) {
        const double lij = lo(i, j) / lo(i, i);
        for (int k = 0; k < std::min(i, m); ++k)
          jac(m + j, k) += lij * dratio(i) * (-lo(i, k) / lo(i, i));
        if (i < m) jac(m + j, m + i) += lij * dratio(i) * (-1.0);
      }
    }
    const VectorXd step = jac.partialPivLu().solve(f);
    double scale = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls) {
      VectorXd w_try = w;
      VectorXd mu_try = mu;
      w_try.head(m) -= scale * step.head(m);
      mu_try.head(m) -= scale * step.tail(m);
      residual(w_try, mu_try, f_try);
      if (f_try.norm() < fn) {
        w = w_try;
        mu = mu_try;
        f = f_try;
        fn = f_try.norm();
        moved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!moved) break;
  }
  if (fn <= 1e-6) {
    tilt.mu = mu;
    tilt.path = w;
    tilt.solved = true;
    tilt.log_bound = psi_value(prob, w, mu);
  } else {
    // Untilted proposal: log weight <= 0 is a valid (looser) bound.
    tilt.mu.setZero();
    tilt.path.setZero();
    tilt.solved = false;
    tilt.log_bound = 0.0;
  }
  return tilt;
}

// One sequential proposal in the reordered frame; returns the log
// importance weight and fills `w`.
double propose(const detail::SovProblem& prob, const VectorXd& mu,
               RngStream& rng, VectorXd& w) {
  const int n = static_cast<int>(prob.upper.size());
  const MatrixXd& lo = prob.lower_chol;
  double log_w = 0.0;
  for (int i = 0; i < n; ++i) {
    double num = prob.upper(i);
    for (int k = 0; k < i; ++k) num -= lo(i, k) * w(k);
    const double ut = num / lo(i, i);
    const double c = ut - mu(i);
    w(i) = mu(i) + sample_trunc_std_upper(c, rng);
    log_w += log_norm_cdf(c) + 0.5 * mu(i) * mu(i) - mu(i) * w(i);
  }
  return log_w;
}

void gibbs_sweep(const MatrixXd& precision, const VectorXd& b, VectorXd& w,
                 RngStream& rng) {
  const int n = static_cast<int>(b.size());
  for (int i = 0; i < n; ++i) {
    const double prec = precision(i, i);
    double cross = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) cross += precision(i, j) * w(j);
    const double cond_mean = -cross / prec;
    const double cond_sd = 1.0 / std::sqrt(prec);
    const double cut = (b(i) - cond_mean) / cond_sd;
    w(i) = cond_mean + cond_sd * sample_trunc_std_upper(cut, rng);
  }
}

}  // namespace

TmvnSample sample_tmvn(const TruncNormalSpec& spec, std::size_t n_draws,
                       RngStream& rng, const EngineConfig& cfg) {
  const int dim = static_cast<int>(spec.lower.size());
  if (spec.mean.size() != dim || spec.cov.rows() != dim ||
      spec.cov.cols() != dim)
    throw DimensionMismatch("sample_tmvn: dimensions disagree");
  if (n_draws == 0) throw DimensionMismatch("sample_tmvn: n must be >= 1");
  require_symmetric(spec.cov, 1e-10, "sample_tmvn");

  TmvnSample out;
  out.draws.resize(static_cast<Eigen::Index>(n_draws), dim);

  const bool unconstrained = [&] {
    for (int i = 0; i < dim; ++i)
      if (spec.lower(i) != -kInf) return false;
    return true;
  }();
  if (unconstrained) {
    const CholResult ch = chol_jittered(spec.cov, cfg.jitter, "sample_tmvn");
    VectorXd z(dim);
    for (std::size_t s = 0; s < n_draws; ++s) {
      for (int i = 0; i < dim; ++i) z(i) = rng.normal();
      out.draws.row(s) =
          (spec.mean + ch.lower.triangularView<Eigen::Lower>() * z)
              .transpose();
    }
    out.method = TmvnMethod::gaussian;
    return out;
  }

  if (dim == 1) {
    const double sd = std::sqrt(spec.cov(0, 0));
    const double cut = (spec.lower(0) - spec.mean(0)) / sd;
    for (std::size_t s = 0; s < n_draws; ++s)
      out.draws(s, 0) = spec.mean(0) + sd * sample_trunc_std_lower(cut, rng);
    return out;
  }

  // Work on -X: standardized, upper-truncated at b.
  const SdCorr sc = to_correlation(spec.cov);
  VectorXd b(dim);
  for (int i = 0; i < dim; ++i)
    b(i) = spec.lower(i) == -kInf
               ? kInf
               : (spec.mean(i) - spec.lower(i)) / sc.sd(i);

  const double log_prob = mvn_cdf(b, sc.corr, cfg.mvn.accuracy, cfg).log_value;
  bool force_gibbs = false;
  if (log_prob < cfg.tmvn.min_log_prob) {
    if (!cfg.tmvn.allow_gibbs_fallback)
      throw RegionTooImprobable("sample_tmvn: region probability below floor");
    force_gibbs = true;
  }

  const CholResult feas = chol_jittered(sc.corr, cfg.jitter, "sample_tmvn");
  MatrixXd corr = sc.corr;
  if (feas.jitter > 0) corr.diagonal().array() += feas.jitter;
  const detail::SovProblem prob = detail::sov_prepare(b, corr);
  const Tilt tilt = solve_tilt(prob);

  auto emit = [&](std::size_t row, const VectorXd& innovations) {
    // The proposal lives in innovation space: z = L * eps, then un-permute
    // and map back through X = mean - D * z.
    const VectorXd z =
        prob.lower_chol.triangularView<Eigen::Lower>() * innovations;
    for (int i = 0; i < dim; ++i) {
      const int orig = prob.perm[i];
      out.draws(row, orig) = spec.mean(orig) - sc.sd(orig) * z(i);
    }
  };

  VectorXd w(dim);
  std::size_t accepted = 0;
  std::size_t proposals = 0;
  bool fallback = force_gibbs;
  if (force_gibbs) out.acceptance = 0.0;
  if (!force_gibbs) {
    const std::size_t patience =
        std::max<std::size_t>(4096, 64 * static_cast<std::size_t>(dim));
    while (accepted < n_draws) {
      const double log_w = propose(prob, tilt.mu, rng, w);
      ++proposals;
      if (std::log(rng.uniform()) <= log_w - tilt.log_bound) {
        emit(accepted, w);
        ++accepted;
      }
      if (proposals >= patience &&
          static_cast<double>(accepted) <
              cfg.tmvn.min_acceptance * static_cast<double>(proposals)) {
        if (!cfg.tmvn.allow_gibbs_fallback)
          throw RegionTooImprobable(
              "sample_tmvn: acceptance below floor and fallback disabled");
        fallback = true;
        break;
      }
    }
    out.acceptance = proposals > 0
                         ? static_cast<double>(accepted) /
                               static_cast<double>(proposals)
                         : 1.0;
  }

  if (fallback) {
    // Remaining draws via per-coordinate sweeps from a feasible start.
    MatrixXd prec = MatrixXd::Identity(dim, dim);
    chol_jittered(corr, cfg.jitter, "sample_tmvn")
        .lower.triangularView<Eigen::Lower>()
        .solveInPlace(prec);
    prec = prec.transpose() * prec;  // corr^{-1}, original coordinate order
    VectorXd innovations(dim);
    propose(prob, tilt.mu, rng, innovations);  // feasible by construction
    const VectorXd state =
        prob.lower_chol.triangularView<Eigen::Lower>() * innovations;
    // Undo the reordering so sweeps run in the original frame.
    VectorXd st(dim), bb(dim);
    for (int i = 0; i < dim; ++i) {
      st(prob.perm[i]) = state(i);
      bb(prob.perm[i]) = prob.upper(i);
    }
    for (int sweep = 0; sweep < cfg.tmvn.gibbs_burnin; ++sweep)
      gibbs_sweep(prec, bb, st, rng);
    for (std::size_t s = accepted; s < n_draws; ++s) {
      for (int t = 0; t < cfg.tmvn.gibbs_thin; ++t)
        gibbs_sweep(prec, bb, st, rng);
      for (int i = 0; i < dim; ++i)
        out.draws(s, i) = spec.mean(i) - sc.sd(i) * st(i);
    }
    out.method = TmvnMethod::gibbs_fallback;
  }
  return out;
}

}  // namespace sunbayes
