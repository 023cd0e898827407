#include "sunbayes/sun.hpp"

#include <cmath>
#include <limits>

#include "sunbayes/errors.hpp"
#include "sunbayes/normal.hpp"

namespace sunbayes {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// X_skew = delta^T omega_corr^{-1} omega_sd^{-1} = delta^T omega_sd omega^{-1};
// the q x p matrix mapping beta deviations into the CDF argument.
MatrixXd skew_projection(const SunParams& p, const JitterOptions& jopts) {
  const CholResult ch = chol_jittered(p.omega, jopts, "sun: omega");
  MatrixXd rhs = p.omega_sd().asDiagonal() * p.delta;  // p x q
  ch.lower.triangularView<Eigen::Lower>().solveInPlace(rhs);
  ch.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(rhs);
  return rhs.transpose();  // q x p
}

// Gamma - Delta^T OmegaBar^{-1} Delta, the conditional CDF covariance.
MatrixXd cdf_cov(const SunParams& p, const MatrixXd& x_skew) {
  return p.gamma_corr - x_skew * p.omega_sd().asDiagonal() * p.delta;
}
}  // namespace

MatrixXd SunParams::omega_corr() const {
  return to_correlation(omega).corr;
}

SunParams SunParams::gaussian_prior(const VectorXd& mean,
                                    const MatrixXd& cov) {
  SunParams out;
  out.xi = mean;
  out.omega = cov;
  out.delta = MatrixXd(mean.size(), 0);
  out.gamma = VectorXd(0);
  out.gamma_corr = MatrixXd(0, 0);
  return out;
}

SunParams canonicalize(const SunParams& params, const EngineConfig& cfg) {
  SunParams out = params;
  const int q = params.latent_dim();
  if (q > 0) {
    const VectorXd d = params.gamma_corr.diagonal().array().sqrt();
    if ((d.array() - 1.0).abs().maxCoeff() > 1e-12) {
      const VectorXd inv = d.array().inverse();
      out.gamma_corr = inv.asDiagonal() * params.gamma_corr * inv.asDiagonal();
      out.gamma = inv.asDiagonal() * params.gamma;
      out.delta = params.delta * inv.asDiagonal();
    }
    out.gamma_corr.diagonal().setOnes();
    out.gamma_corr = (0.5 * (out.gamma_corr + out.gamma_corr.transpose())).eval();
  }
  validate(out, cfg);
  return out;
}

void validate(const SunParams& params, const EngineConfig& cfg) {
  const int p = params.dim();
  const int q = params.latent_dim();
  if (params.omega.rows() != p || params.omega.cols() != p)
    throw DimensionMismatch("SunParams: omega shape");
  if (params.delta.rows() != p || params.delta.cols() != q)
    throw DimensionMismatch("SunParams: delta shape");
  if (params.gamma_corr.rows() != q || params.gamma_corr.cols() != q)
    throw DimensionMismatch("SunParams: gamma_corr shape");
  require_symmetric(params.omega, 1e-10, "SunParams: omega");
  chol_jittered(params.omega, cfg.jitter, "SunParams: omega");
  if (q == 0) return;
  require_symmetric(params.gamma_corr, 1e-10, "SunParams: gamma_corr");
  for (int i = 0; i < q; ++i)
    if (std::abs(params.gamma_corr(i, i) - 1.0) > 1e-8)
      throw DimensionMismatch("SunParams: gamma_corr diagonal is not 1");
  // Joint correlation block matrix must be PD.
  MatrixXd joint(p + q, p + q);
  joint.topLeftCorner(p, p) = params.omega_corr();
  joint.bottomRightCorner(q, q) = params.gamma_corr;
  joint.topRightCorner(p, q) = params.delta;
  joint.bottomLeftCorner(q, p) = params.delta.transpose();
  chol_jittered(joint, cfg.jitter, "SunParams: joint correlation");
}

double sun_log_density(const SunParams& params, const VectorXd& beta,
                       const EngineConfig& cfg) {
  if (beta.size() != params.dim())
    throw DimensionMismatch("sun_log_density: beta length");
  const double log_gauss = log_mvn_pdf(beta, params.xi, params.omega,
                                       cfg.jitter);
  if (params.gaussian()) return log_gauss;
  const MatrixXd x_skew = skew_projection(params, cfg.jitter);
  const VectorXd arg = params.gamma + x_skew * (beta - params.xi);
  const MatrixXd cond = cdf_cov(params, x_skew);
  const double log_num =
      mvn_cdf_shifted(arg, VectorXd::Zero(arg.size()), cond,
                      cfg.mvn.accuracy, cfg)
          .log_value;
  const double log_den =
      mvn_cdf(params.gamma, params.gamma_corr, cfg.mvn.accuracy, cfg).log_value;
  return log_gauss + log_num - log_den;
}

double sun_log_mgf(const SunParams& params, const VectorXd& t,
                   const EngineConfig& cfg) {
  if (t.size() != params.dim())
    throw DimensionMismatch("sun_mgf: t length");
  const double quad =
      params.xi.dot(t) + 0.5 * t.dot(params.omega * t);
  if (params.gaussian()) return quad;
  const VectorXd arg =
      params.gamma + params.delta.transpose() * params.omega_sd().asDiagonal() * t;
  const double log_num =
      mvn_cdf(arg, params.gamma_corr, cfg.mvn.accuracy, cfg).log_value;
  const double log_den =
      mvn_cdf(params.gamma, params.gamma_corr, cfg.mvn.accuracy, cfg).log_value;
  return quad + log_num - log_den;
}

double sun_mgf(const SunParams& params, const VectorXd& t,
               const EngineConfig& cfg) {
  return std::exp(sun_log_mgf(params, t, cfg));
}

SunMoments sun_moments(const SunParams& params, const EngineConfig& cfg) {
  SunMoments out;
  if (params.gaussian()) {
    out.mean = params.xi;
    out.cov = params.omega;
    return out;
  }
  const int q = params.latent_dim();
  if (q > cfg.sun_dim_cap)
    throw MomentDimExceeded("sun_moments: latent dim exceeds cap");
  // Additive representation: beta = xi + w (U0 + Delta Gamma^{-1} U1) with
  // U1 the lower-truncated latent block.
  const TnMoments u1 =
      detail::tallis_moments(-params.gamma, params.gamma_corr, cfg);
  const CholResult gch =
      chol_jittered(params.gamma_corr, cfg.jitter, "sun_moments: gamma_corr");
  auto gamma_solve = [&](const MatrixXd& rhs) {
    MatrixXd s = rhs;
    gch.lower.triangularView<Eigen::Lower>().solveInPlace(s);
    gch.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(s);
    return s;
  };
  const VectorXd w = params.omega_sd();
  const MatrixXd mixing =
      w.asDiagonal() * params.delta * gamma_solve(MatrixXd::Identity(q, q));
  out.mean = params.xi + mixing * u1.mean;
  out.cov = params.omega - mixing * params.delta.transpose() * w.asDiagonal() +
            mixing * u1.cov * mixing.transpose();
  out.cov = (0.5 * (out.cov + out.cov.transpose())).eval();
  return out;
}

SunSample sun_sample(const SunParams& params, std::size_t n, RngStream& rng,
                     const EngineConfig& cfg) {
  if (n == 0) throw DimensionMismatch("sun_sample: n must be >= 1");
  const int p = params.dim();
  SunSample out;
  out.seed = rng.seed();
  out.draws.resize(static_cast<Eigen::Index>(n), p);
  if (params.gaussian()) {
    const CholResult ch = chol_jittered(params.omega, cfg.jitter, "sun_sample");
    VectorXd z(p);
    for (std::size_t s = 0; s < n; ++s) {
      for (int i = 0; i < p; ++i) z(i) = rng.normal();
      out.draws.row(s) =
          (params.xi + ch.lower.triangularView<Eigen::Lower>() * z).transpose();
    }
    out.method = TmvnMethod::gaussian;
    return out;
  }
  const int q = params.latent_dim();
  const CholResult gch =
      chol_jittered(params.gamma_corr, cfg.jitter, "sun_sample: gamma_corr");
  MatrixXd gamma_inv_delta_t = params.delta.transpose();  // q x p
  gch.lower.triangularView<Eigen::Lower>().solveInPlace(gamma_inv_delta_t);
  gch.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(
      gamma_inv_delta_t);
  const MatrixXd u0_cov =
      params.omega_corr() - params.delta * gamma_inv_delta_t;
  const CholResult ch0 = chol_jittered(u0_cov, cfg.jitter, "sun_sample: U0");

  TruncNormalSpec spec{-params.gamma, VectorXd::Zero(q), params.gamma_corr};
  const TmvnSample u1 = sample_tmvn(spec, n, rng, cfg);
  out.method = u1.method;

  const VectorXd w = params.omega_sd();
  VectorXd z(p);
  for (std::size_t s = 0; s < n; ++s) {
    for (int i = 0; i < p; ++i) z(i) = rng.normal();
    const VectorXd u0 = ch0.lower.triangularView<Eigen::Lower>() * z;
    const VectorXd mix =
        gamma_inv_delta_t.transpose() * u1.draws.row(s).transpose();
    out.draws.row(s) =
        (params.xi + w.asDiagonal() * (u0 + mix)).transpose();
  }
  return out;
}

McdfResult sun_cdf(const SunParams& params, const VectorXd& b, double accuracy,
                   const EngineConfig& cfg) {
  if (b.size() != params.dim())
    throw DimensionMismatch("sun_cdf: b length");
  const int p = params.dim();
  const int q = params.latent_dim();
  if (p + q > cfg.sun_dim_cap)
    throw MomentDimExceeded("sun_cdf: joint dim exceeds cap");
  const VectorXd w = params.omega_sd();
  VectorXd arg(p + q);
  for (int i = 0; i < p; ++i)
    arg(i) = b(i) == kInf ? kInf : (b(i) - params.xi(i)) / w(i);
  if (q == 0) return mvn_cdf(arg, params.omega_corr(), accuracy, cfg);
  arg.tail(q) = params.gamma;
  MatrixXd joint(p + q, p + q);
  joint.topLeftCorner(p, p) = params.omega_corr();
  joint.bottomRightCorner(q, q) = params.gamma_corr;
  joint.topRightCorner(p, q) = -params.delta;
  joint.bottomLeftCorner(q, p) = -params.delta.transpose();
  McdfResult num = mvn_cdf(arg, joint, accuracy, cfg);
  const McdfResult den = mvn_cdf(params.gamma, params.gamma_corr, accuracy, cfg);
  McdfResult out;
  out.log_value = num.log_value - den.log_value;
  out.value = std::exp(out.log_value);
  // First-order error propagation of the ratio.
  const double rel_num = num.value > 0 ? num.std_error / num.value : 0.0;
  const double rel_den = den.value > 0 ? den.std_error / den.value : 0.0;
  out.std_error = out.value * std::hypot(rel_num, rel_den);
  out.n_samples = num.n_samples + den.n_samples;
  return out;
}

SunParams sun_marginal(const SunParams& params, const std::vector<int>& idx) {
  if (idx.empty()) throw EmptyIndexSet("sun_marginal: empty index set");
  for (int i : idx)
    if (i < 0 || i >= params.dim())
      throw DimensionMismatch("sun_marginal: index out of range");
  const int d = static_cast<int>(idx.size());
  SunParams out;
  out.xi.resize(d);
  out.omega.resize(d, d);
  out.delta.resize(d, params.latent_dim());
  out.gamma = params.gamma;
  out.gamma_corr = params.gamma_corr;
  for (int r = 0; r < d; ++r) {
    out.xi(r) = params.xi(idx[r]);
    out.delta.row(r) = params.delta.row(idx[r]);
    for (int c = 0; c < d; ++c) out.omega(r, c) = params.omega(idx[r], idx[c]);
  }
  return out;
}

SunParams sun_linear(const SunParams& params, const MatrixXd& coeffs,
                     const VectorXd& shift, const EngineConfig&) {
  const int d = static_cast<int>(coeffs.rows());
  if (coeffs.cols() != params.dim())
    throw DimensionMismatch("sun_linear: coeffs shape");
  if (shift.size() != d) throw DimensionMismatch("sun_linear: shift length");
  const MatrixXd scale = coeffs * params.omega * coeffs.transpose();
  {
    Eigen::LLT<MatrixXd> llt(scale);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
      // A rank-deficient transform can round to a tiny positive pivot.
      const VectorXd diag = MatrixXd(llt.matrixL()).diagonal();
      const double floor = 1e-7 * std::sqrt(scale.diagonal().maxCoeff());
      ok = diag.minCoeff() > floor;
    }
    if (!ok) {
      Eigen::FullPivLU<MatrixXd> lu(coeffs);
      if (lu.rank() < d)
        throw RankDeficient("sun_linear: coeffs not full row rank");
      throw RankDeficient("sun_linear: transformed scale not PD");
    }
  }
  SunParams out;
  out.xi = shift + coeffs * params.xi;
  out.omega = (0.5 * (scale + scale.transpose())).eval();
  const VectorXd new_sd = out.omega.diagonal().array().sqrt();
  out.delta = new_sd.array().inverse().matrix().asDiagonal() * coeffs *
              params.omega_sd().asDiagonal() * params.delta;
  out.gamma = params.gamma;
  out.gamma_corr = params.gamma_corr;
  return out;
}

bool sun_params_close(const SunParams& a, const SunParams& b, double tol) {
  if (a.dim() != b.dim() || a.latent_dim() != b.latent_dim()) return false;
  const SunParams ca = canonicalize(a);
  const SunParams cb = canonicalize(b);
  auto close = [tol](const MatrixXd& x, const MatrixXd& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (x.size() == 0) return true;
    return (x - y).cwiseAbs().maxCoeff() <= tol;
  };
  const MatrixXd sa = ca.omega_sd().asDiagonal() * ca.delta;
  const MatrixXd sb = cb.omega_sd().asDiagonal() * cb.delta;
  return close(ca.xi, cb.xi) && close(ca.omega, cb.omega) && close(sa, sb) &&
         close(ca.gamma, cb.gamma) && close(ca.gamma_corr, cb.gamma_corr);
}

}  // namespace sunbayes
