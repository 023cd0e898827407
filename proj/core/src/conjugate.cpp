#include "sunbayes/conjugate.hpp"

#include <cmath>

#include "sunbayes/errors.hpp"
#include "sunbayes/normal.hpp"

namespace sunbayes {

namespace {

// Solve S x = rhs for SPD S via its jittered Cholesky.
MatrixXd spd_solve(const MatrixXd& s, const MatrixXd& rhs,
                   const JitterOptions& jopts, const std::string& who) {
  const CholResult ch = chol_jittered(s, jopts, who);
  MatrixXd x = rhs;
  ch.lower.triangularView<Eigen::Lower>().solveInPlace(x);
  ch.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

struct GaussianUpdate {
  SunParams params;
  VectorXd log_s1;
  double log_phi_evidence = 0.0;  // log phi(y1 - X1 xi; Sigma1 + X1 Omega X1^T)
};

GaussianUpdate gaussian_update(const SunParams& prior, const GaussBlock& block,
                               const EngineConfig& cfg) {
  const int p = prior.dim();
  const int q = prior.latent_dim();
  const int n1 = static_cast<int>(block.y1.size());
  if (block.x1.cols() != p)
    throw DimensionMismatch("update_gaussian_block: design width != prior dim");

  GaussianUpdate out;
  out.log_s1 = VectorXd::Zero(q);

  // Marginal covariance of y1 drives both the evidence term and, through
  // the Woodbury route, the posterior scale when n1 < p.
  const MatrixXd cross = block.x1 * prior.omega;          // n1 x p
  const MatrixXd marg = block.sigma1 + cross * block.x1.transpose();
  const VectorXd resid = block.y1 - block.x1 * prior.xi;
  out.log_phi_evidence =
      log_mvn_pdf(block.y1, block.x1 * prior.xi, marg, cfg.jitter);

  MatrixXd omega1;
  VectorXd xi1;
  if (n1 < p) {
    const MatrixXd gain =
        spd_solve(marg, cross, cfg.jitter, "update: marginal cov").transpose();
    omega1 = prior.omega - gain * cross;
    xi1 = prior.xi + gain * resid;
  } else {
    const MatrixXd sigma1_inv_x1 =
        spd_solve(block.sigma1, block.x1, cfg.jitter, "update: sigma1");
    const MatrixXd prec = spd_solve(prior.omega, MatrixXd::Identity(p, p),
                                    cfg.jitter, "update: omega") +
                          block.x1.transpose() * sigma1_inv_x1;
    const VectorXd rhs =
        spd_solve(prior.omega, prior.xi, cfg.jitter, "update: omega rhs") +
        block.x1.transpose() *
            spd_solve(block.sigma1, block.y1, cfg.jitter, "update: sigma1 y");
    omega1 = spd_solve(prec, MatrixXd::Identity(p, p), cfg.jitter,
                       "update: posterior precision");
    xi1 = omega1 * rhs;
  }
  omega1 = (0.5 * (omega1 + omega1.transpose())).eval();

  SunParams post;
  post.xi = xi1;
  post.omega = omega1;
  if (q == 0) {
    post.delta = MatrixXd(p, 0);
    post.gamma = VectorXd(0);
    post.gamma_corr = MatrixXd(0, 0);
    out.params = std::move(post);
    return out;
  }

  // Skew block transforms through the s1-rescaled correlation mapping.
  const VectorXd w = prior.omega_sd();
  const MatrixXd omega_inv_wd = spd_solve(
      prior.omega, w.asDiagonal() * prior.delta, cfg.jitter, "update: omega");
  // projection = Delta^T OmegaBar^{-1} omega^{-1} = (Omega^{-1} w Delta)^T
  const MatrixXd projection = omega_inv_wd.transpose();  // q x p
  const MatrixXd inner =
      prior.gamma_corr +
      prior.delta.transpose() * w.asDiagonal() *
          (spd_solve(prior.omega, omega1 * omega_inv_wd, cfg.jitter,
                     "update: omega chain") -
           omega_inv_wd);
  const VectorXd s1 = inner.diagonal().array().sqrt();
  out.log_s1 = s1.array().log();
  const VectorXd s1_inv = s1.array().inverse();

  const VectorXd w1 = omega1.diagonal().array().sqrt();
  post.delta = w1.array().inverse().matrix().asDiagonal() * omega1 *
               omega_inv_wd * s1_inv.asDiagonal();
  post.gamma =
      s1_inv.asDiagonal() * (prior.gamma + projection * (xi1 - prior.xi));
  post.gamma_corr = s1_inv.asDiagonal() * inner * s1_inv.asDiagonal();
  post.gamma_corr.diagonal().setOnes();
  post.gamma_corr =
      (0.5 * (post.gamma_corr + post.gamma_corr.transpose())).eval();
  out.params = std::move(post);
  return out;
}

}  // namespace

SunParams update_gaussian_block(const SunParams& prior, const GaussBlock& block,
                                const EngineConfig& cfg) {
  validate(prior, cfg);
  return gaussian_update(prior, block, cfg).params;
}

PosteriorBundle update(const SunParams& prior, const UnifiedLikelihood& lik,
                       const EngineConfig& cfg) {
  validate(prior, cfg);
  lik.check();
  if (lik.dim() != prior.dim())
    throw DimensionMismatch("update: likelihood dim != prior dim");
  const int p = prior.dim();
  const int q = prior.latent_dim();

  PosteriorBundle bundle;
  bundle.log_evidence_base = lik.log_c;
  if (q > 0) {
    bundle.log_evidence_base -=
        mvn_cdf(prior.gamma, prior.gamma_corr, cfg.mvn.accuracy, cfg).log_value;
  }

  SunParams stage;
  if (lik.gauss) {
    GaussianUpdate gu = gaussian_update(prior, *lik.gauss, cfg);
    stage = std::move(gu.params);
    bundle.log_s1 = gu.log_s1;
    bundle.log_evidence_base += gu.log_phi_evidence;
  } else {
    stage = prior;
    bundle.log_s1 = VectorXd::Zero(q);
  }

  if (!lik.cdf) {
    bundle.posterior = stage;
    bundle.log_s0 = VectorXd(0);
    if (q > 0) bundle.partition.push_back(q);
  } else {
    const CdfBlock& c = *lik.cdf;
    const int n0 = c.rows();
    const MatrixXd cross = c.x0 * stage.omega;  // n0 x p
    MatrixXd cap = cross * c.x0.transpose();    // X0 Omega1 X0^T + Sigma0
    {
      int at = 0;
      for (std::size_t b = 0; b < c.partition.size(); ++b) {
        const int k = c.partition[b];
        cap.block(at, at, k, k) += c.sigma0_blocks[b];
        at += k;
      }
    }
    const VectorXd s0 = cap.diagonal().array().sqrt();
    bundle.log_s0 = s0.array().log();
    const VectorXd s0_inv = s0.array().inverse();
    const VectorXd w1 = stage.omega_sd();

    SunParams post;
    post.xi = stage.xi;
    post.omega = stage.omega;
    post.delta.resize(p, q + n0);
    post.delta.leftCols(q) = stage.delta;
    post.delta.rightCols(n0) = w1.array().inverse().matrix().asDiagonal() *
                               cross.transpose() * s0_inv.asDiagonal();
    post.gamma.resize(q + n0);
    post.gamma.head(q) = stage.gamma;
    post.gamma.tail(n0) = s0_inv.asDiagonal() * (c.y0 + c.x0 * stage.xi);
    post.gamma_corr.resize(q + n0, q + n0);
    post.gamma_corr.topLeftCorner(q, q) = stage.gamma_corr;
    post.gamma_corr.bottomRightCorner(n0, n0) =
        s0_inv.asDiagonal() * cap * s0_inv.asDiagonal();
    const MatrixXd off = s0_inv.asDiagonal() * c.x0 * w1.asDiagonal() *
                         stage.delta;  // n0 x q
    post.gamma_corr.bottomLeftCorner(n0, q) = off;
    post.gamma_corr.topRightCorner(q, n0) = off.transpose();
    post.gamma_corr.diagonal().setOnes();
    post.gamma_corr =
        (0.5 * (post.gamma_corr + post.gamma_corr.transpose())).eval();
    bundle.posterior = std::move(post);
    if (q > 0) bundle.partition.push_back(q);
    for (int s : c.partition) bundle.partition.push_back(s);
  }

  // Cached reparameterization.
  const SunParams& post = bundle.posterior;
  const int qn = post.latent_dim();
  const VectorXd wp = post.omega_sd();
  const MatrixXd omega_inv_wd =
      spd_solve(post.omega, wp.asDiagonal() * post.delta, cfg.jitter,
                "update: cache omega");
  bundle.x_post = omega_inv_wd.transpose();  // q_n x p
  bundle.eta_post = post.gamma - bundle.x_post * post.xi;

  const MatrixXd sigma_post_dense =
      post.gamma_corr - post.delta.transpose() * wp.asDiagonal() * omega_inv_wd;
  bundle.sigma_post_blocks.clear();
  {
    int at = 0;
    for (int k : bundle.partition) {
      MatrixXd blk = sigma_post_dense.block(at, at, k, k);
      blk = (0.5 * (blk + blk.transpose())).eval();
      bundle.sigma_post_blocks.push_back(std::move(blk));
      at += k;
    }
    if (at != qn)
      throw DimensionMismatch("update: partition does not span latent dim");
  }

  // v_post via the blockwise precision of sigma_post.
  MatrixXd xt_sinv_x = MatrixXd::Zero(p, p);
  {
    int at = 0;
    for (std::size_t b = 0; b < bundle.partition.size(); ++b) {
      const int k = bundle.partition[b];
      const MatrixXd xs = bundle.x_post.middleRows(at, k);
      const MatrixXd sinv_x = spd_solve(bundle.sigma_post_blocks[b], xs,
                                        cfg.jitter, "update: sigma_post");
      xt_sinv_x += xs.transpose() * sinv_x;
      at += k;
    }
  }
  const MatrixXd omega_prec = spd_solve(post.omega, MatrixXd::Identity(p, p),
                                        cfg.jitter, "update: omega prec");
  bundle.v_post = spd_solve(omega_prec + xt_sinv_x, MatrixXd::Identity(p, p),
                            cfg.jitter, "update: v_post");
  bundle.v_post = (0.5 * (bundle.v_post + bundle.v_post.transpose())).eval();
  return bundle;
}

double log_marginal_likelihood(const PosteriorBundle& bundle, double accuracy,
                               const EngineConfig& cfg) {
  const int qn = bundle.posterior.latent_dim();
  if (qn > cfg.sun_dim_cap)
    throw MomentDimExceeded("log_marginal_likelihood: CDF dim exceeds cap");
  double log_post_cdf = 0.0;
  if (qn > 0) {
    VectorXd clamped = bundle.posterior.gamma;
    for (Eigen::Index i = 0; i < clamped.size(); ++i)
      clamped(i) = std::clamp(clamped(i), -cfg.mvn.clamp, cfg.mvn.clamp);
    log_post_cdf =
        mvn_cdf(clamped, bundle.posterior.gamma_corr, accuracy, cfg).log_value;
  }
  return bundle.log_evidence_base + log_post_cdf;
}

double log_marginal_likelihood(const SunParams& prior,
                               const UnifiedLikelihood& lik, double accuracy,
                               const EngineConfig& cfg) {
  return log_marginal_likelihood(update(prior, lik, cfg), accuracy, cfg);
}

double log_predictive(const SunParams& prior, const UnifiedLikelihood& train,
                      const UnifiedLikelihood& fresh, double accuracy,
                      const EngineConfig& cfg) {
  const bool fresh_empty = !fresh.gauss && !fresh.cdf;
  if (fresh_empty) return 0.0;
  const UnifiedLikelihood joint = concat_likelihoods({train, fresh});
  const double log_joint = log_marginal_likelihood(prior, joint, accuracy, cfg);
  const double log_train = log_marginal_likelihood(prior, train, accuracy, cfg);
  return log_joint - log_train;
}

}  // namespace sunbayes
