#include "sunbayes/samplers.hpp"

#include <cmath>

#include "sunbayes/errors.hpp"

namespace sunbayes {

namespace {

// Shared pieces of the coefficient full conditional
// beta | z ~ N(V [X^T Sigma^{-1} (z - eta) + Omega^{-1} xi], V).
struct BetaConditional {
  MatrixXd v_chol;          // lower Cholesky of v_post
  MatrixXd xt_sigma_inv;    // p x latent
  VectorXd base;            // V Omega^{-1} xi
  const PosteriorBundle* bundle = nullptr;

  explicit BetaConditional(const PosteriorBundle& b, const EngineConfig& cfg) {
    bundle = &b;
    const int p = b.posterior.dim();
    v_chol = chol_jittered(b.v_post, cfg.jitter, "gibbs: v_post").lower;
    const int qn = b.latent_dim();
    xt_sigma_inv.resize(p, qn);
    int at = 0;
    for (std::size_t blk = 0; blk < b.partition.size(); ++blk) {
      const int k = b.partition[blk];
      const CholResult ch =
          chol_jittered(b.sigma_post_blocks[blk], cfg.jitter, "gibbs: sigma");
      MatrixXd xs = b.x_post.middleRows(at, k).transpose();  // p x k
      ch.lower.transpose()
          .triangularView<Eigen::Upper>()
          .solveInPlace<Eigen::OnTheRight>(xs);
      ch.lower.triangularView<Eigen::Lower>().solveInPlace<Eigen::OnTheRight>(
          xs);
      xt_sigma_inv.middleCols(at, k) = xs;
      at += k;
    }
    const CholResult och =
        chol_jittered(b.posterior.omega, cfg.jitter, "gibbs: omega");
    VectorXd ox = b.posterior.xi;
    och.lower.triangularView<Eigen::Lower>().solveInPlace(ox);
    och.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(ox);
    base = b.v_post * ox;
  }

  VectorXd mean_given(const VectorXd& z) const {
    return base +
           bundle->v_post * (xt_sigma_inv * (z - bundle->eta_post));
  }

  VectorXd draw(const VectorXd& z, RngStream& rng) const {
    const int p = static_cast<int>(base.size());
    VectorXd eps(p);
    for (int i = 0; i < p; ++i) eps(i) = rng.normal();
    return mean_given(z) + v_chol.triangularView<Eigen::Lower>() * eps;
  }
};

}  // namespace

ChainOutput gibbs(const PosteriorBundle& bundle, std::size_t n_iter,
                  RngStream& rng, const GibbsOptions& opts,
                  const EngineConfig& cfg) {
  if (n_iter == 0) throw DimensionMismatch("gibbs: n_iter must be >= 1");
  const int p = bundle.posterior.dim();
  const int qn = bundle.latent_dim();
  ChainOutput out;
  out.seed = rng.seed();
  out.burn_in = opts.burn_in;
  out.method = ChainMethod::gibbs;
  out.draws.resize(static_cast<Eigen::Index>(n_iter), p);
  if (opts.keep_z && qn > 0)
    out.z_draws.resize(static_cast<Eigen::Index>(n_iter), qn);

  if (qn == 0) {
    // No latent block: the chain is i.i.d. Gaussian.
    const CholResult ch =
        chol_jittered(bundle.posterior.omega, cfg.jitter, "gibbs: omega");
    VectorXd eps(p);
    for (std::size_t s = 0; s < n_iter; ++s) {
      for (int i = 0; i < p; ++i) eps(i) = rng.normal();
      out.draws.row(s) = (bundle.posterior.xi +
                          ch.lower.triangularView<Eigen::Lower>() * eps)
                             .transpose();
    }
    return out;
  }

  const BetaConditional beta_cond(bundle, cfg);
  VectorXd z(qn);
  // Start the latent block at its unconditional truncated means.
  for (int i = 0; i < qn; ++i)
    z(i) = std::max(bundle.posterior.gamma(i), 0.5);
  VectorXd beta = beta_cond.mean_given(z);

  EngineConfig block_cfg = cfg;
  block_cfg.tmvn.allow_gibbs_fallback = true;
  const int total = opts.burn_in + static_cast<int>(n_iter);
  for (int it = 0; it < total; ++it) {
    // z | beta: blockwise lower-truncated normal at zero.
    const VectorXd loc = bundle.eta_post + bundle.x_post * beta;
    int at = 0;
    for (std::size_t blk = 0; blk < bundle.partition.size(); ++blk) {
      const int k = bundle.partition[blk];
      TruncNormalSpec spec{VectorXd::Zero(k), loc.segment(at, k),
                           bundle.sigma_post_blocks[blk]};
      const TmvnSample draw = sample_tmvn(spec, 1, rng, block_cfg);
      if (draw.method == TmvnMethod::gibbs_fallback) out.exact = false;
      z.segment(at, k) = draw.draws.row(0).transpose();
      at += k;
    }
    beta = beta_cond.draw(z, rng);
    const int kept = it - opts.burn_in;
    if (kept >= 0) {
      out.draws.row(kept) = beta.transpose();
      if (opts.keep_z && qn > 0) out.z_draws.row(kept) = z.transpose();
    }
  }
  return out;
}

ChainOutput iid(const PosteriorBundle& bundle, std::size_t n, RngStream& rng,
                IidRoute route, const EngineConfig& cfg) {
  if (n == 0) throw DimensionMismatch("iid: n must be >= 1");
  const int p = bundle.posterior.dim();
  const int qn = bundle.latent_dim();
  ChainOutput out;
  out.seed = rng.seed();
  out.method = ChainMethod::iid;
  if (qn == 0) {
    const SunSample s = sun_sample(bundle.posterior, n, rng, cfg);
    out.draws = s.draws;
    return out;
  }
  if (route == IidRoute::automatic) route = IidRoute::marginal_latent;
  if (route == IidRoute::additive) {
    const SunSample s = sun_sample(bundle.posterior, n, rng, cfg);
    out.draws = s.draws;
    out.exact = s.method != TmvnMethod::gibbs_fallback;
    return out;
  }
  // Marginal-latent route: z ~ TN(0; gamma_post, Gamma_post), then the
  // Gaussian coefficient conditional.
  TruncNormalSpec spec{VectorXd::Zero(qn), bundle.posterior.gamma,
                       bundle.posterior.gamma_corr};
  const TmvnSample zs = sample_tmvn(spec, n, rng, cfg);
  out.exact = zs.method != TmvnMethod::gibbs_fallback;
  out.acceptance = zs.acceptance;
  const BetaConditional beta_cond(bundle, cfg);
  out.draws.resize(static_cast<Eigen::Index>(n), p);
  for (std::size_t s = 0; s < n; ++s)
    out.draws.row(s) =
        beta_cond.draw(zs.draws.row(s).transpose(), rng).transpose();
  return out;
}

double effective_sample_size(const VectorXd& series) {
  const int n = static_cast<int>(series.size());
  if (n < 4) return static_cast<double>(n);
  const double mean = series.mean();
  const VectorXd centered = series.array() - mean;
  const double var = centered.squaredNorm() / n;
  if (var <= 0) return static_cast<double>(n);
  // Geyer initial positive sequence on paired autocovariances.
  double tau = 1.0;
  for (int lag = 1; lag + 1 < n; lag += 2) {
    double rho_a = 0.0, rho_b = 0.0;
    for (int t = 0; t + lag < n; ++t) rho_a += centered(t) * centered(t + lag);
    for (int t = 0; t + lag + 1 < n; ++t)
      rho_b += centered(t) * centered(t + lag + 1);
    rho_a /= n * var;
    rho_b /= n * var;
    const double pair = rho_a + rho_b;
    if (pair <= 0) break;
    tau += 2.0 * pair;
    if (lag > n / 3) break;
  }
  return std::max(1.0, static_cast<double>(n) / tau);
}

}  // namespace sunbayes
