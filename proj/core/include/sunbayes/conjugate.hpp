#pragma once

#include <vector>

#include "sunbayes/models.hpp"
#include "sunbayes/sun.hpp"

namespace sunbayes {

// Exact posterior plus the cached reparameterization consumed by the
// samplers and the deterministic approximations. The latent vector behind
// the posterior CDF term is z ~ N(eta_post + X_post beta, sigma_post)
// truncated below zero, block-independent along `partition`.
struct PosteriorBundle {
  SunParams posterior;
  std::vector<int> partition;  // prior latent block first (if any)

  MatrixXd x_post;    // (q+n0) x p
  VectorXd eta_post;  // gamma_post - x_post * xi_post
  std::vector<MatrixXd> sigma_post_blocks;
  MatrixXd v_post;    // (omega_post^{-1} + x_post^T sigma_post^{-1} x_post)^{-1}
  VectorXd log_s0;    // CDF-block rescaling diagonals, log scale
  VectorXd log_s1;    // Gaussian-block rescaling diagonals, log scale

  // log c + log phi-term of the evidence - log Phi(gamma; Gamma) of the
  // prior; adding log Phi(gamma_post; Gamma_post) completes the marginal
  // likelihood.
  double log_evidence_base = 0.0;

  MatrixXd sigma_post_dense() const { return block_diag(sigma_post_blocks); }
  int latent_dim() const { return static_cast<int>(eta_post.size()); }
};

// Conjugate update against the Gaussian-density block only.
SunParams update_gaussian_block(const SunParams& prior, const GaussBlock& block,
                                const EngineConfig& cfg = {});

// Full conjugate update: Gaussian block first, then the CDF block.
// Degenerate designs that drive the posterior correlation blocks to
// singularity (duplicated CDF rows under a singular noise block) surface
// as NonPositiveDefinite once the jitter ladder is exhausted.
PosteriorBundle update(const SunParams& prior, const UnifiedLikelihood& lik,
                       const EngineConfig& cfg = {});

double log_marginal_likelihood(const SunParams& prior,
                               const UnifiedLikelihood& lik, double accuracy,
                               const EngineConfig& cfg = {});
double log_marginal_likelihood(const PosteriorBundle& bundle, double accuracy,
                               const EngineConfig& cfg = {});

// log p(y_new | y) as a difference of marginal likelihoods on the
// concatenated and the training likelihoods.
double log_predictive(const SunParams& prior, const UnifiedLikelihood& train,
                      const UnifiedLikelihood& fresh, double accuracy,
                      const EngineConfig& cfg = {});

}  // namespace sunbayes
