#include <chrono>
#include <cmath>
#include <vector>

#include "sunbayes/approx.hpp"
#include "sunbayes/errors.hpp"
#include "sunbayes/normal.hpp"

namespace sunbayes {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Moments plus the entropy pieces of N(mu, s) truncated below zero.
struct BlockMoments {
  VectorXd mean;
  MatrixXd cov;
  double entropy = 0.0;
};

BlockMoments truncated_block(const VectorXd& mu, const MatrixXd& s,
                             const CholResult& s_chol, double log_det_s,
                             const EngineConfig& cfg) {
  const int k = static_cast<int>(mu.size());
  BlockMoments out;
  double log_p;
  if (k == 1) {
    const double sd = std::sqrt(s(0, 0));
    const double cut = -mu(0) / sd;
    out.mean = VectorXd::Constant(1, mu(0) + sd * trunc_std_mean_lower(cut));
    out.cov = MatrixXd::Constant(1, 1, s(0, 0) * trunc_std_var_lower(cut));
    log_p = log_norm_cdf_c(cut);
  } else {
    const TnMoments tm = detail::tallis_moments(-mu, s, cfg);
    out.mean = tm.mean + mu;
    out.cov = tm.cov;
    TruncNormalSpec spec{VectorXd::Zero(k), mu, s};
    log_p = tmvn_log_prob(spec, cfg);
  }
  // H = 0.5 E[(z-mu)' S^{-1} (z-mu)] + 0.5 log det(2 pi S) + log P.
  const VectorXd diff = out.mean - mu;
  MatrixXd quad = out.cov + diff * diff.transpose();
  s_chol.lower.triangularView<Eigen::Lower>().solveInPlace(quad);
  s_chol.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(quad);
  out.entropy =
      0.5 * quad.trace() + 0.5 * (k * kLog2Pi + log_det_s) + log_p;
  return out;
}

struct VbWorkspace {
  const PosteriorBundle* bundle = nullptr;
  int qn = 0;
  std::vector<int> offsets;
  MatrixXd lam;                    // Gamma_post^{-1}
  double log_det_gamma = 0.0;
  MatrixXd w_proj;                 // X V X^T
  VectorXd t0;                     // X V Omega^{-1} xi
  std::vector<CholResult> sigma_chols;
  std::vector<double> sigma_log_dets;
  std::vector<MatrixXd> sigma_inv;  // per-block inverses of sigma_post
  // PFM factor covariances: inverses of the diagonal blocks of lam.
  std::vector<MatrixXd> pfm_cov;
  std::vector<CholResult> pfm_chols;
  std::vector<double> pfm_log_dets;

  VbWorkspace(const PosteriorBundle& b, const EngineConfig& cfg, bool pfm) {
    bundle = &b;
    qn = b.latent_dim();
    offsets = block_offsets(b.partition);
    const CholResult gch =
        chol_jittered(b.posterior.gamma_corr, cfg.jitter, "vb: gamma_corr");
    log_det_gamma = log_det_from_chol(gch.lower);
    lam = MatrixXd::Identity(qn, qn);
    gch.lower.triangularView<Eigen::Lower>().solveInPlace(lam);
    gch.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(lam);
    w_proj = b.x_post * b.v_post * b.x_post.transpose();
    const CholResult och =
        chol_jittered(b.posterior.omega, cfg.jitter, "vb: omega");
    VectorXd ox = b.posterior.xi;
    och.lower.triangularView<Eigen::Lower>().solveInPlace(ox);
    och.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(ox);
    t0 = b.x_post * (b.v_post * ox);
    for (std::size_t c = 0; c < b.partition.size(); ++c) {
      const int k = b.partition[c];
      sigma_chols.push_back(
          chol_jittered(b.sigma_post_blocks[c], cfg.jitter, "vb: sigma"));
      sigma_log_dets.push_back(log_det_from_chol(sigma_chols.back().lower));
      MatrixXd inv = MatrixXd::Identity(k, k);
      sigma_chols.back().lower.triangularView<Eigen::Lower>().solveInPlace(inv);
      sigma_chols.back()
          .lower.transpose()
          .triangularView<Eigen::Upper>()
          .solveInPlace(inv);
      sigma_inv.push_back(std::move(inv));
      if (pfm) {
        const int at = offsets[c];
        MatrixXd prec_blk = lam.block(at, at, k, k);
        MatrixXd cov = MatrixXd::Identity(k, k);
        CholResult pch = chol_jittered(prec_blk, cfg.jitter, "vb: pfm block");
        pch.lower.triangularView<Eigen::Lower>().solveInPlace(cov);
        pch.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(cov);
        cov = (0.5 * (cov + cov.transpose())).eval();
        pfm_chols.push_back(chol_jittered(cov, cfg.jitter, "vb: pfm cov"));
        pfm_log_dets.push_back(log_det_from_chol(pfm_chols.back().lower));
        pfm_cov.push_back(std::move(cov));
      }
    }
  }

  VectorXd sigma_inv_apply(const VectorXd& v) const {
    VectorXd out(qn);
    for (std::size_t c = 0; c < bundle->partition.size(); ++c) {
      const int at = offsets[c];
      const int k = bundle->partition[c];
      out.segment(at, k) = sigma_inv[c] * v.segment(at, k);
    }
    return out;
  }

  // Shared quadratic ELBO pieces given current q(z) moments.
  double elbo_core(const VectorXd& z_mean,
                   const std::vector<MatrixXd>& z_cov) const {
    const VectorXd diff = z_mean - bundle->posterior.gamma;
    double acc = -0.5 * diff.dot(lam * diff) -
                 0.5 * (qn * kLog2Pi + log_det_gamma);
    for (std::size_t c = 0; c < bundle->partition.size(); ++c) {
      const int at = offsets[c];
      const int k = bundle->partition[c];
      acc -= 0.5 * (lam.block(at, at, k, k) * z_cov[c]).trace();
    }
    return acc;
  }
};

VbState exact_gaussian_state(const PosteriorBundle& bundle) {
  VbState out;
  out.beta_mean = bundle.posterior.xi;
  out.beta_cov = bundle.posterior.omega;
  out.converged = true;
  out.n_iter = 0;
  out.elbo_trace = {0.0};
  return out;
}

VectorXd stack_means(const std::vector<VectorXd>& blocks, int qn,
                     const std::vector<int>& offsets) {
  VectorXd out(qn);
  for (std::size_t c = 0; c < blocks.size(); ++c)
    out.segment(offsets[c], blocks[c].size()) = blocks[c];
  return out;
}

// One full mean-field sweep: coefficient factor then every latent block;
// returns the ELBO after the sweep.
double mf_iteration(const VbWorkspace& ws, const PosteriorBundle& bundle,
                    std::vector<VectorXd>& z_mean,
                    std::vector<MatrixXd>& z_cov, const EngineConfig& cfg) {
  const int qn = ws.qn;
  const std::size_t n_blocks = bundle.partition.size();
  const VectorXd ez = stack_means(z_mean, qn, ws.offsets);
  const VectorXd proj =
      ws.t0 + ws.w_proj * ws.sigma_inv_apply(ez - bundle.eta_post);
  double entropy = 0.0;
  for (std::size_t c = 0; c < n_blocks; ++c) {
    const int at = ws.offsets[c];
    const int k = bundle.partition[c];
    const VectorXd mu = bundle.eta_post.segment(at, k) + proj.segment(at, k);
    const BlockMoments bm =
        truncated_block(mu, bundle.sigma_post_blocks[c], ws.sigma_chols[c],
                        ws.sigma_log_dets[c], cfg);
    z_mean[c] = bm.mean;
    z_cov[c] = bm.cov;
    entropy += bm.entropy;
  }
  const VectorXd ez_new = stack_means(z_mean, qn, ws.offsets);
  double elbo = ws.elbo_core(ez_new, z_cov) + entropy;
  // Mean-field cross term: -0.5 tr(S^{-1} W S^{-1} var(z)).
  for (std::size_t c = 0; c < n_blocks; ++c) {
    const int at = ws.offsets[c];
    const int k = bundle.partition[c];
    const MatrixXd wc =
        ws.sigma_inv[c] * ws.w_proj.block(at, at, k, k) * ws.sigma_inv[c];
    elbo -= 0.5 * (wc * z_cov[c]).trace();
  }
  return elbo;
}

// One partially factorized sweep over the latent blocks; `resid` carries
// lam * (Ez - gamma) and is kept in sync.
double pfm_iteration(const VbWorkspace& ws, const PosteriorBundle& bundle,
                     std::vector<VectorXd>& z_mean,
                     std::vector<MatrixXd>& z_cov, VectorXd& resid,
                     const EngineConfig& cfg) {
  const int qn = ws.qn;
  const std::size_t n_blocks = bundle.partition.size();
  const VectorXd& gam = bundle.posterior.gamma;
  double entropy = 0.0;
  for (std::size_t c = 0; c < n_blocks; ++c) {
    const int at = ws.offsets[c];
    const int k = bundle.partition[c];
    // Conditional location of block c in the latent marginal given the
    // other blocks' current means.
    const VectorXd mu = gam.segment(at, k) + (z_mean[c] - gam.segment(at, k)) -
                        ws.pfm_cov[c] * resid.segment(at, k);
    const BlockMoments bm = truncated_block(mu, ws.pfm_cov[c], ws.pfm_chols[c],
                                            ws.pfm_log_dets[c], cfg);
    // Rank-k refresh of lam * (Ez - gamma).
    const VectorXd shift = bm.mean - z_mean[c];
    resid += ws.lam.middleCols(at, k) * shift;
    z_mean[c] = bm.mean;
    z_cov[c] = bm.cov;
    entropy += bm.entropy;
  }
  const VectorXd ez = stack_means(z_mean, qn, ws.offsets);
  return ws.elbo_core(ez, z_cov) + entropy;
}

void mf_init(const VbWorkspace& ws, const PosteriorBundle& bundle,
             std::vector<VectorXd>& z_mean, std::vector<MatrixXd>& z_cov) {
  const std::size_t n_blocks = bundle.partition.size();
  z_mean.resize(n_blocks);
  z_cov.resize(n_blocks);
  for (std::size_t c = 0; c < n_blocks; ++c) {
    const int at = ws.offsets[c];
    const int k = bundle.partition[c];
    z_mean[c] = bundle.posterior.gamma.segment(at, k).cwiseMax(0.1);
    z_cov[c] = bundle.sigma_post_blocks[c];
  }
}

void pfm_init(const VbWorkspace& ws, const PosteriorBundle& bundle,
              std::vector<VectorXd>& z_mean, std::vector<MatrixXd>& z_cov,
              VectorXd& resid) {
  const std::size_t n_blocks = bundle.partition.size();
  z_mean.resize(n_blocks);
  z_cov.resize(n_blocks);
  for (std::size_t c = 0; c < n_blocks; ++c) {
    const int at = ws.offsets[c];
    const int k = bundle.partition[c];
    z_mean[c] = bundle.posterior.gamma.segment(at, k).cwiseMax(0.1);
    z_cov[c] = ws.pfm_cov[c];
  }
  resid = ws.lam * (stack_means(z_mean, ws.qn, ws.offsets) -
                    bundle.posterior.gamma);
}

}  // namespace

VbState mf_vb(const PosteriorBundle& bundle, const VbOptions& opts,
              const EngineConfig& cfg) {
  if (bundle.latent_dim() == 0) return exact_gaussian_state(bundle);
  const VbWorkspace ws(bundle, cfg, /*pfm=*/false);
  const int qn = ws.qn;

  std::vector<VectorXd> z_mean;
  std::vector<MatrixXd> z_cov;
  mf_init(ws, bundle, z_mean, z_cov);

  VbState out;
  double prev_elbo = -std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opts.max_iter; ++it) {
    const double elbo = mf_iteration(ws, bundle, z_mean, z_cov, cfg);
    out.elbo_trace.push_back(elbo);
    out.n_iter = it;
    if (std::abs(elbo - prev_elbo) < opts.tol) {
      out.converged = true;
      break;
    }
    prev_elbo = elbo;
  }

  const VectorXd ez = stack_means(z_mean, qn, ws.offsets);
  out.beta_mean =
      bundle.v_post * (bundle.x_post.transpose() *
                       ws.sigma_inv_apply(ez - bundle.eta_post));
  {
    const CholResult och =
        chol_jittered(bundle.posterior.omega, cfg.jitter, "mf_vb: omega");
    VectorXd ox = bundle.posterior.xi;
    och.lower.triangularView<Eigen::Lower>().solveInPlace(ox);
    och.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(ox);
    out.beta_mean += bundle.v_post * ox;
  }
  out.beta_cov = bundle.v_post;
  out.z_means.assign(z_mean.begin(), z_mean.end());
  return out;
}

VbState pfm_vb(const PosteriorBundle& bundle, const VbOptions& opts,
               const EngineConfig& cfg) {
  if (bundle.latent_dim() == 0) return exact_gaussian_state(bundle);
  const VbWorkspace ws(bundle, cfg, /*pfm=*/true);
  const int qn = ws.qn;
  const std::size_t n_blocks = bundle.partition.size();

  std::vector<VectorXd> z_mean;
  std::vector<MatrixXd> z_cov;
  VectorXd resid;
  pfm_init(ws, bundle, z_mean, z_cov, resid);

  VbState out;
  double prev_elbo = -std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opts.max_iter; ++it) {
    const double elbo = pfm_iteration(ws, bundle, z_mean, z_cov, resid, cfg);
    out.elbo_trace.push_back(elbo);
    out.n_iter = it;
    if (std::abs(elbo - prev_elbo) < opts.tol) {
      out.converged = true;
      break;
    }
    prev_elbo = elbo;
  }

  // Implied coefficient moments from the exact conditional.
  const VectorXd ez = stack_means(z_mean, qn, ws.offsets);
  const VectorXd adj = ws.sigma_inv_apply(ez - bundle.eta_post);
  out.beta_mean = bundle.v_post * (bundle.x_post.transpose() * adj);
  {
    const CholResult och =
        chol_jittered(bundle.posterior.omega, cfg.jitter, "pfm_vb: omega");
    VectorXd ox = bundle.posterior.xi;
    och.lower.triangularView<Eigen::Lower>().solveInPlace(ox);
    och.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(ox);
    out.beta_mean += bundle.v_post * ox;
  }
  MatrixXd z_cov_dense = MatrixXd::Zero(qn, qn);
  for (std::size_t c = 0; c < n_blocks; ++c) {
    const int at = ws.offsets[c];
    const int k = bundle.partition[c];
    z_cov_dense.block(at, at, k, k) = z_cov[c];
  }
  const MatrixXd half = bundle.v_post * bundle.x_post.transpose();
  MatrixXd inner(qn, qn);
  {
    MatrixXd tmp = z_cov_dense;
    // S^{-1} var(z) S^{-1}, blockwise.
    for (std::size_t c = 0; c < n_blocks; ++c) {
      const int at = ws.offsets[c];
      const int k = bundle.partition[c];
      tmp.block(at, at, k, k) =
          ws.sigma_inv[c] * z_cov_dense.block(at, at, k, k) * ws.sigma_inv[c];
    }
    inner = tmp;
  }
  out.beta_cov = bundle.v_post + half * inner * half.transpose();
  out.beta_cov = (0.5 * (out.beta_cov + out.beta_cov.transpose())).eval();
  out.z_means.assign(z_mean.begin(), z_mean.end());
  return out;
}


double mf_vb_sweep_seconds(const PosteriorBundle& bundle, int n_sweeps,
                           const EngineConfig& cfg) {
  if (bundle.latent_dim() == 0 || n_sweeps <= 0) return 0.0;
  const VbWorkspace ws(bundle, cfg, /*pfm=*/false);
  std::vector<VectorXd> z_mean;
  std::vector<MatrixXd> z_cov;
  mf_init(ws, bundle, z_mean, z_cov);
  mf_iteration(ws, bundle, z_mean, z_cov, cfg);  // warm up
  const auto tic = std::chrono::steady_clock::now();
  for (int it = 0; it < n_sweeps; ++it)
    mf_iteration(ws, bundle, z_mean, z_cov, cfg);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - tic)
             .count() /
         n_sweeps;
}

double pfm_vb_sweep_seconds(const PosteriorBundle& bundle, int n_sweeps,
                            const EngineConfig& cfg) {
  if (bundle.latent_dim() == 0 || n_sweeps <= 0) return 0.0;
  const VbWorkspace ws(bundle, cfg, /*pfm=*/true);
  std::vector<VectorXd> z_mean;
  std::vector<MatrixXd> z_cov;
  VectorXd resid;
  pfm_init(ws, bundle, z_mean, z_cov, resid);
  pfm_iteration(ws, bundle, z_mean, z_cov, resid, cfg);  // warm up
  const auto tic = std::chrono::steady_clock::now();
  for (int it = 0; it < n_sweeps; ++it)
    pfm_iteration(ws, bundle, z_mean, z_cov, resid, cfg);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - tic)
             .count() /
         n_sweeps;
}

}  // namespace sunbayes
