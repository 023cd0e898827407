#pragma once

#include <cstdint>
#include <vector>

#include "sunbayes/config.hpp"
#include "sunbayes/linalg.hpp"
#include "sunbayes/mvn.hpp"
#include "sunbayes/rng.hpp"

namespace sunbayes {

// Unified skew-normal parameter set. The latent dimension may be zero, in
// which case the distribution is plain Gaussian and the skewness fields are
// empty. gamma_corr is kept as a correlation matrix; any diagonal rescaling
// is absorbed into delta and gamma by canonicalize().
struct SunParams {
  VectorXd xi;          // location, length p
  MatrixXd omega;       // p x p SPD scale
  MatrixXd delta;       // p x q skewness (q may be 0)
  VectorXd gamma;       // length q truncation shift
  MatrixXd gamma_corr;  // q x q correlation

  int dim() const { return static_cast<int>(xi.size()); }
  int latent_dim() const { return static_cast<int>(gamma.size()); }
  bool gaussian() const { return latent_dim() == 0; }

  // sqrt(diag(omega)) and the associated correlation matrix.
  VectorXd omega_sd() const { return omega.diagonal().array().sqrt(); }
  MatrixXd omega_corr() const;

  static SunParams gaussian_prior(const VectorXd& mean, const MatrixXd& cov);
};

// Rescales so gamma_corr has unit diagonal and validates that the joint
// (p+q) correlation block matrix is positive definite.
SunParams canonicalize(const SunParams& params, const EngineConfig& cfg = {});

// Structural + numerical check; throws on violation.
void validate(const SunParams& params, const EngineConfig& cfg = {});

struct SunSample {
  MatrixXd draws;  // n x p
  std::uint64_t seed = 0;
  TmvnMethod method = TmvnMethod::exact_tilting;
};

struct SunMoments {
  VectorXd mean;
  MatrixXd cov;
};

double sun_log_density(const SunParams& params, const VectorXd& beta,
                       const EngineConfig& cfg = {});

// Moment generating function at t, computed in log scale.
double sun_log_mgf(const SunParams& params, const VectorXd& t,
                   const EngineConfig& cfg = {});
double sun_mgf(const SunParams& params, const VectorXd& t,
               const EngineConfig& cfg = {});

// Exact mean and covariance through the additive representation; requires
// latent_dim() <= cfg.sun_dim_cap.
SunMoments sun_moments(const SunParams& params, const EngineConfig& cfg = {});

SunSample sun_sample(const SunParams& params, std::size_t n, RngStream& rng,
                     const EngineConfig& cfg = {});

McdfResult sun_cdf(const SunParams& params, const VectorXd& b, double accuracy,
                   const EngineConfig& cfg = {});

// Marginal of the coordinates in idx (0-based, non-empty).
SunParams sun_marginal(const SunParams& params, const std::vector<int>& idx);

// Distribution of shift + coeffs * beta; coeffs is d x p with full row rank.
SunParams sun_linear(const SunParams& params, const MatrixXd& coeffs,
                     const VectorXd& shift, const EngineConfig& cfg = {});

// Equality of canonicalized parameters within tol, comparing
// (xi, omega, omega_sd*delta, gamma, gamma_corr).
bool sun_params_close(const SunParams& a, const SunParams& b, double tol);

}  // namespace sunbayes
