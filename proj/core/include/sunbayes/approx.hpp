#pragma once

#include <vector>

#include "sunbayes/conjugate.hpp"

namespace sunbayes {

struct VbOptions {
  double tol = 1e-6;       // absolute ELBO change
  int max_iter = 1000;
};

// Output of the coordinate-ascent variational schemes. The ELBO trace is
// reported up to one additive constant shared by both families, so the
// mean-field and partially factorized optima are directly comparable.
struct VbState {
  VectorXd beta_mean;
  MatrixXd beta_cov;
  std::vector<VectorXd> z_means;  // per partition block
  std::vector<double> elbo_trace;
  bool converged = false;
  int n_iter = 0;
};

// Mean-field family: independent coefficient and latent factors.
VbState mf_vb(const PosteriorBundle& bundle, const VbOptions& opts = {},
              const EngineConfig& cfg = {});

// Partially factorized family: the coefficient conditional is kept exact
// and only the latent blocks factorize.
VbState pfm_vb(const PosteriorBundle& bundle, const VbOptions& opts = {},
               const EngineConfig& cfg = {});

struct EpOptions {
  double tol = 1e-6;      // max-norm change of site natural parameters
  int max_iter = 200;
  double damping = 1.0;   // 1 = undamped; halved automatically after a
                          // non-positive-definite cavity event
  bool reverse_order = false;  // sweep sites last-to-first
  bool with_evidence = true;
};

// Gaussian site c, parameterized in the row space of its design block:
// Q_c = X_c^T K X_c and r_c = X_c^T k.
struct EpSite {
  MatrixXd k_mat;
  VectorXd k_vec;
  double log_norm = 0.0;  // site contribution to the evidence
};

struct EpState {
  VectorXd mean;
  MatrixXd cov;        // dense mode only (0 x 0 when scalable)
  VectorXd cov_diag;
  std::vector<EpSite> sites;
  double log_evidence = 0.0;
  bool converged = false;
  int n_iter = 0;
  int n_cavity_failures = 0;
};

// Expectation propagation on the bundle's latent blocks. SUN priors are
// handled automatically: their CDF factor arrives as the bundle's leading
// partition block.
EpState ep(const PosteriorBundle& bundle, const EpOptions& opts = {},
           const EngineConfig& cfg = {});

// Same fixed point and sweep order with O(n p min(n, p)) per-sweep cost.
EpState ep_scalable(const PosteriorBundle& bundle, const EpOptions& opts = {},
                    const EngineConfig& cfg = {});

// Per-sweep wall time after workspace precomputation; the timing hooks of
// the scaling harness.
double mf_vb_sweep_seconds(const PosteriorBundle& bundle, int n_sweeps,
                           const EngineConfig& cfg = {});
double pfm_vb_sweep_seconds(const PosteriorBundle& bundle, int n_sweeps,
                            const EngineConfig& cfg = {});
double ep_sweep_seconds(const PosteriorBundle& bundle, int n_sweeps,
                        const EngineConfig& cfg = {});

}  // namespace sunbayes
