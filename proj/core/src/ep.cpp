#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "sunbayes/approx.hpp"
#include "sunbayes/errors.hpp"
#include "sunbayes/normal.hpp"

namespace sunbayes {

namespace {

bool finite(const MatrixXd& m) { return m.allFinite(); }
bool finite(const VectorXd& v) { return v.allFinite(); }

struct SiteBlocks {
  std::vector<int> offsets;
  std::vector<MatrixXd> design;   // X_c, k x p
  std::vector<VectorXd> shift;    // eta_c
  std::vector<MatrixXd> noise;    // Sigma_cc
};

// Small-matrix work shared by the cavity and the moment-matching step.
struct SiteUpdate {
  MatrixXd k_new;
  VectorXd r_new;
  bool ok = false;
};

// Everything here is k x k or k x 1; the caller supplies the global
// projections W_cc = X_c Omega X_c^T and xm_c = X_c m.
SiteUpdate match_site(const MatrixXd& w_cc, const VectorXd& xm_c,
                      const MatrixXd& k_mat, const VectorXd& k_vec,
                      const VectorXd& eta_c, const MatrixXd& noise_c,
                      const EngineConfig& cfg) {
  SiteUpdate out;
  const int k = static_cast<int>(xm_c.size());
  const MatrixXd eye = MatrixXd::Identity(k, k);

  const Eigen::PartialPivLU<MatrixXd> cav_lu(eye - k_mat * w_cc);
  const MatrixXd d = cav_lu.solve(k_mat);
  if (!finite(d)) return out;
  const MatrixXd w_cav = w_cc + w_cc * d * w_cc;
  const VectorXd xm_cav = xm_c + w_cc * (d * xm_c) -
                          w_cc * ((eye + d * w_cc) * k_vec);
  if (!finite(w_cav) || !finite(xm_cav)) return out;

  MatrixXd hybrid_cov = noise_c + w_cav;
  hybrid_cov = (0.5 * (hybrid_cov + hybrid_cov.transpose())).eval();
  const VectorXd diag = hybrid_cov.diagonal();
  if ((diag.array() <= 0).any()) return out;
  const VectorXd s = diag.array().sqrt();
  const VectorXd s_inv = s.array().inverse();
  const MatrixXd corr = s_inv.asDiagonal() * hybrid_cov * s_inv.asDiagonal();
  const VectorXd gamma_c = s_inv.asDiagonal() * (eta_c + xm_cav);

  Eigen::LLT<MatrixXd> corr_llt(corr);
  if (corr_llt.info() != Eigen::Success) return out;

  TnMoments tm;
  try {
    tm = detail::tallis_moments(-gamma_c, corr, cfg);
  } catch (const Error&) {
    return out;
  }
  if (!finite(tm.mean) || !finite(tm.cov)) return out;

  const MatrixXd corr_inv = corr_llt.solve(MatrixXd::Identity(k, k));
  const MatrixXd scaled_inv = s_inv.asDiagonal() * corr_inv;  // s^{-1} G^{-1}
  const MatrixXd h =
      scaled_inv * (corr - tm.cov) * scaled_inv.transpose();
  const VectorXd me = scaled_inv * tm.mean;

  const Eigen::PartialPivLU<MatrixXd> new_lu(eye - h * w_cav);
  const MatrixXd k_prime = new_lu.solve(h);
  if (!finite(k_prime)) return out;
  const VectorXd r_prime =
      k_prime * xm_cav + (eye + k_prime * w_cav) * me;
  if (!finite(r_prime)) return out;

  out.k_new = (0.5 * (k_prime + k_prime.transpose())).eval();
  out.r_new = r_prime;
  out.ok = true;
  return out;
}

struct EpEngine {
  const PosteriorBundle* bundle = nullptr;
  SiteBlocks blocks;
  bool scalable = false;

  // Dense mode.
  MatrixXd omega;  // p x p
  VectorXd m;      // p

  // Scalable mode: products only.
  MatrixXd w_full;  // qn x qn, X Omega X^T
  VectorXd xm;      // qn, X m

  MatrixXd w_cc(int c) const {
    const int at = blocks.offsets[c];
    const int k = static_cast<int>(blocks.shift[c].size());
    if (scalable) return w_full.block(at, at, k, k);
    return blocks.design[c] * omega * blocks.design[c].transpose();
  }
  VectorXd xm_c(int c) const {
    const int at = blocks.offsets[c];
    const int k = static_cast<int>(blocks.shift[c].size());
    if (scalable) return xm.segment(at, k);
    return blocks.design[c] * m;
  }

  void apply(int c, const MatrixXd& dk, const VectorXd& dr) {
    const int at = blocks.offsets[c];
    const int k = static_cast<int>(blocks.shift[c].size());
    const MatrixXd eye = MatrixXd::Identity(k, k);
    const MatrixXd wcc = w_cc(c);
    const MatrixXd e = (eye + dk * wcc).partialPivLu().solve(dk);
    if (scalable) {
      const MatrixXd w_col = w_full.middleCols(at, k);  // qn x k
      const VectorXd xm_blk = xm.segment(at, k);
      w_full -= w_col * e * w_col.transpose();
      xm += -w_col * (e * xm_blk) + w_col * ((eye - e * wcc) * dr);
      w_full = (0.5 * (w_full + w_full.transpose())).eval();
    } else {
      const MatrixXd p_mat = blocks.design[c] * omega;  // k x p
      const VectorXd xmc = blocks.design[c] * m;
      omega -= p_mat.transpose() * e * p_mat;
      omega = (0.5 * (omega + omega.transpose())).eval();
      m += -p_mat.transpose() * (e * xmc) +
           p_mat.transpose() * ((eye - e * wcc) * dr);
    }
  }
};

SiteBlocks split_blocks(const PosteriorBundle& bundle) {
  SiteBlocks blocks;
  blocks.offsets = block_offsets(bundle.partition);
  int at = 0;
  for (std::size_t c = 0; c < bundle.partition.size(); ++c) {
    const int k = bundle.partition[c];
    blocks.design.push_back(bundle.x_post.middleRows(at, k));
    blocks.shift.push_back(bundle.eta_post.segment(at, k));
    blocks.noise.push_back(bundle.sigma_post_blocks[c]);
    at += k;
  }
  return blocks;
}

EpState run_ep(const PosteriorBundle& bundle, const EpOptions& opts,
               bool scalable, const EngineConfig& cfg) {
  const int p = bundle.posterior.dim();
  const int qn = bundle.latent_dim();
  for (int k : bundle.partition)
    if (k > cfg.tn_moment_cap)
      throw MomentDimExceeded("ep: partition block exceeds moment cap");

  EpState state;
  if (qn == 0) {
    state.mean = bundle.posterior.xi;
    state.cov = bundle.posterior.omega;
    state.cov_diag = bundle.posterior.omega.diagonal();
    state.log_evidence = bundle.log_evidence_base;
    state.converged = true;
    state.n_iter = 0;
    return state;
  }

  EpEngine engine;
  engine.bundle = &bundle;
  engine.blocks = split_blocks(bundle);
  engine.scalable = scalable;
  const std::size_t n_sites = bundle.partition.size();
  MatrixXd w0;        // X Omega_post X^T at initialization
  MatrixXd x_omega0;  // X Omega_post, kept for the scalable finalization
  if (scalable) {
    x_omega0 = bundle.x_post * bundle.posterior.omega;  // qn x p
    engine.w_full = x_omega0 * bundle.x_post.transpose();
    engine.w_full = (0.5 * (engine.w_full + engine.w_full.transpose())).eval();
    engine.xm = bundle.x_post * bundle.posterior.xi;
    w0 = engine.w_full;
  } else {
    engine.omega = bundle.posterior.omega;
    engine.m = bundle.posterior.xi;
  }

  state.sites.resize(n_sites);
  for (std::size_t c = 0; c < n_sites; ++c) {
    const int k = bundle.partition[c];
    state.sites[c].k_mat = MatrixXd::Zero(k, k);
    state.sites[c].k_vec = VectorXd::Zero(k);
  }

  std::vector<std::size_t> order(n_sites);
  for (std::size_t c = 0; c < n_sites; ++c)
    order[c] = opts.reverse_order ? n_sites - 1 - c : c;

  double damping = opts.damping;
  bool converged = false;
  int iter = 0;
  for (iter = 1; iter <= opts.max_iter; ++iter) {
    double max_delta = 0.0;
    bool any_ok = false;
    int failures_this_sweep = 0;
    for (std::size_t c : order) {
      EpSite& site = state.sites[c];
      const SiteUpdate upd =
          match_site(engine.w_cc(static_cast<int>(c)),
                     engine.xm_c(static_cast<int>(c)), site.k_mat, site.k_vec,
                     engine.blocks.shift[c], engine.blocks.noise[c], cfg);
      if (!upd.ok) {
        ++state.n_cavity_failures;
        ++failures_this_sweep;
        damping = std::min(damping, 0.5);
        continue;
      }
      any_ok = true;
      const MatrixXd dk = damping * (upd.k_new - site.k_mat);
      const VectorXd dr = damping * (upd.r_new - site.k_vec);
      engine.apply(static_cast<int>(c), dk, dr);
      site.k_mat += dk;
      site.k_vec += dr;
      max_delta = std::max(max_delta, dk.cwiseAbs().maxCoeff());
      max_delta = std::max(max_delta, dr.cwiseAbs().maxCoeff());
    }
    if (!any_ok && failures_this_sweep == static_cast<int>(n_sites))
      throw AllSitesSkipped("ep: every site produced an invalid cavity");
    state.n_iter = iter;
    if (max_delta < opts.tol) {
      converged = true;
      break;
    }
  }
  state.converged = converged;

  // Finalize the global moments.
  if (scalable) {
    // m = xi + P0^T kappa - P0^T T (X xi + W0 kappa), with
    // T = Ktilde (I + W0 Ktilde)^{-1} assembled blockwise.
    VectorXd kappa(qn);
    MatrixXd ktilde = MatrixXd::Zero(qn, qn);
    for (std::size_t c = 0; c < n_sites; ++c) {
      const int at = engine.blocks.offsets[c];
      const int k = bundle.partition[c];
      kappa.segment(at, k) = state.sites[c].k_vec;
      ktilde.block(at, at, k, k) = state.sites[c].k_mat;
    }
    const MatrixXd cap = MatrixXd::Identity(qn, qn) + w0 * ktilde;
    const Eigen::PartialPivLU<MatrixXd> cap_lu(cap);
    const MatrixXd t_mat = ktilde * cap_lu.inverse();
    const VectorXd x_xi = bundle.x_post * bundle.posterior.xi;
    state.mean = bundle.posterior.xi + x_omega0.transpose() * kappa -
                 x_omega0.transpose() *
                     (t_mat * (x_xi + w0 * kappa));
    state.cov_diag.resize(p);
    const MatrixXd t_p0 = t_mat * x_omega0;  // qn x p
    for (int j = 0; j < p; ++j) {
      state.cov_diag(j) =
          bundle.posterior.omega(j, j) -
          x_omega0.col(j).dot(t_p0.col(j));
    }
    state.cov.resize(0, 0);
  } else {
    state.mean = engine.m;
    state.cov = engine.omega;
    state.cov_diag = engine.omega.diagonal();
  }

  state.log_evidence = bundle.log_evidence_base;
  return state;
}

// Evidence assembled from converged cavities; needs dense global state.
double ep_evidence(const PosteriorBundle& bundle, EpState& state,
                   const EngineConfig& cfg) {
  const int p = bundle.posterior.dim();
  const int qn = bundle.latent_dim();
  if (qn == 0) return bundle.log_evidence_base;
  const SiteBlocks blocks = split_blocks(bundle);

  // Dense global (assembled once; scalable mode pays this only on demand).
  const CholResult post_chol =
      chol_jittered(bundle.posterior.omega, cfg.jitter, "ep evidence: omega");
  VectorXd r0 = bundle.posterior.xi;
  post_chol.lower.triangularView<Eigen::Lower>().solveInPlace(r0);
  post_chol.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(r0);

  MatrixXd prec = MatrixXd::Identity(p, p);
  post_chol.lower.triangularView<Eigen::Lower>().solveInPlace(prec);
  post_chol.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(prec);
  VectorXd r_glob = r0;
  for (std::size_t c = 0; c < blocks.design.size(); ++c) {
    prec += blocks.design[c].transpose() * state.sites[c].k_mat *
            blocks.design[c];
    r_glob += blocks.design[c].transpose() * state.sites[c].k_vec;
  }
  const CholResult glob_chol = chol_jittered(prec, cfg.jitter, "ep evidence");
  VectorXd m_glob = r_glob;
  glob_chol.lower.triangularView<Eigen::Lower>().solveInPlace(m_glob);
  glob_chol.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(
      m_glob);
  MatrixXd omega_glob = MatrixXd::Identity(p, p);
  glob_chol.lower.triangularView<Eigen::Lower>().solveInPlace(omega_glob);
  glob_chol.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(
      omega_glob);

  double acc = bundle.log_evidence_base;
  const double rm_glob = r_glob.dot(m_glob);
  for (std::size_t c = 0; c < blocks.design.size(); ++c) {
    const int k = bundle.partition[c];
    const MatrixXd eye = MatrixXd::Identity(k, k);
    const MatrixXd& kc = state.sites[c].k_mat;
    const VectorXd& rc = state.sites[c].k_vec;
    const MatrixXd w_cc = blocks.design[c] * omega_glob *
                          blocks.design[c].transpose();
    const VectorXd xmc = blocks.design[c] * m_glob;
    const MatrixXd d = (eye - kc * w_cc).partialPivLu().solve(kc);
    const MatrixXd w_cav = w_cc + w_cc * d * w_cc;
    const MatrixXd p_mat = blocks.design[c] * omega_glob;  // k x p
    const VectorXd xi_cav = m_glob + p_mat.transpose() * (d * xmc) -
                            p_mat.transpose() * ((eye + d * w_cc) * rc);
    const VectorXd r_cav = r_glob - blocks.design[c].transpose() * rc;

    MatrixXd hybrid_cov = blocks.noise[c] + w_cav;
    hybrid_cov = (0.5 * (hybrid_cov + hybrid_cov.transpose())).eval();
    const VectorXd s = hybrid_cov.diagonal().array().sqrt();
    const VectorXd s_inv = s.array().inverse();
    const MatrixXd corr = s_inv.asDiagonal() * hybrid_cov * s_inv.asDiagonal();
    const VectorXd gamma_c =
        s_inv.asDiagonal() *
        (blocks.shift[c] + blocks.design[c] * xi_cav);
    const double log_z =
        mvn_cdf(gamma_c, corr, cfg.mvn.accuracy, cfg).log_value;

    const double logdet_ratio =
        std::log(std::abs((eye + kc * w_cav).determinant()));
    const double dg = 0.5 * (rm_glob - r_cav.dot(xi_cav)) - 0.5 * logdet_ratio;
    state.sites[c].log_norm = log_z - dg;
    acc += log_z - dg;
  }
  // G(r_glob, Q_glob) - G(r0, Q0).
  const double logdet_q_ratio = [&] {
    MatrixXd kt = MatrixXd::Zero(qn, qn);
    const std::vector<int> offs = block_offsets(bundle.partition);
    for (std::size_t c = 0; c < blocks.design.size(); ++c) {
      const int at = offs[c];
      const int k = bundle.partition[c];
      kt.block(at, at, k, k) = state.sites[c].k_mat;
    }
    const MatrixXd w0 = bundle.x_post * bundle.posterior.omega *
                        bundle.x_post.transpose();
    return std::log(
        std::abs((MatrixXd::Identity(qn, qn) + kt * w0).determinant()));
  }();
  acc += 0.5 * (rm_glob - r0.dot(bundle.posterior.xi)) - 0.5 * logdet_q_ratio;
  return acc;
}

}  // namespace

EpState ep(const PosteriorBundle& bundle, const EpOptions& opts,
           const EngineConfig& cfg) {
  EpState state = run_ep(bundle, opts, /*scalable=*/false, cfg);
  if (opts.with_evidence && bundle.latent_dim() > 0)
    state.log_evidence = ep_evidence(bundle, state, cfg);
  return state;
}

EpState ep_scalable(const PosteriorBundle& bundle, const EpOptions& opts,
                    const EngineConfig& cfg) {
  EpState state = run_ep(bundle, opts, /*scalable=*/true, cfg);
  if (opts.with_evidence && bundle.latent_dim() > 0)
    state.log_evidence = ep_evidence(bundle, state, cfg);
  return state;
}

double ep_sweep_seconds(const PosteriorBundle& bundle, int n_sweeps,
                        const EngineConfig& cfg) {
  const int qn = bundle.latent_dim();
  if (qn == 0 || n_sweeps <= 0) return 0.0;
  EpEngine engine;
  engine.bundle = &bundle;
  engine.blocks = split_blocks(bundle);
  engine.scalable = true;
  const MatrixXd x_omega0 = bundle.x_post * bundle.posterior.omega;
  engine.w_full = x_omega0 * bundle.x_post.transpose();
  engine.w_full = (0.5 * (engine.w_full + engine.w_full.transpose())).eval();
  engine.xm = bundle.x_post * bundle.posterior.xi;
  const std::size_t n_sites = bundle.partition.size();
  std::vector<EpSite> sites(n_sites);
  for (std::size_t c = 0; c < n_sites; ++c) {
    const int k = bundle.partition[c];
    sites[c].k_mat = MatrixXd::Zero(k, k);
    sites[c].k_vec = VectorXd::Zero(k);
  }
  auto sweep = [&] {
    for (std::size_t c = 0; c < n_sites; ++c) {
      EpSite& site = sites[c];
      const SiteUpdate upd =
          match_site(engine.w_cc(static_cast<int>(c)),
                     engine.xm_c(static_cast<int>(c)), site.k_mat, site.k_vec,
                     engine.blocks.shift[c], engine.blocks.noise[c], cfg);
      if (!upd.ok) continue;
      const MatrixXd dk = upd.k_new - site.k_mat;
      const VectorXd dr = upd.r_new - site.k_vec;
      engine.apply(static_cast<int>(c), dk, dr);
      site.k_mat += dk;
      site.k_vec += dr;
    }
  };
  sweep();  // warm up
  const auto tic = std::chrono::steady_clock::now();
  for (int it = 0; it < n_sweeps; ++it) sweep();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - tic)
             .count() /
         n_sweeps;
}

}  // namespace sunbayes
