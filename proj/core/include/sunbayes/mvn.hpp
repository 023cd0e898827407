#pragma once

#include <cstddef>
#include <string>

#include "sunbayes/config.hpp"
#include "sunbayes/linalg.hpp"
#include "sunbayes/rng.hpp"

namespace sunbayes {

// Gaussian-CDF estimate with Monte Carlo error accounting. log_value stays
// finite even when value underflows in linear scale.
struct McdfResult {
  double value = 0.0;
  double log_value = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
};

// Lower-truncated multivariate normal: X ~ N(mean, cov) restricted to
// {x : x >= lower}. Entries of `lower` may be -inf.
struct TruncNormalSpec {
  VectorXd lower;
  VectorXd mean;
  MatrixXd cov;
};

struct TnMoments {
  VectorXd mean;
  MatrixXd cov;
};

enum class TmvnMethod { exact_tilting, gibbs_fallback, gaussian };

// Draws plus sampler provenance. `rows` is n x dim.
struct TmvnSample {
  MatrixXd draws;
  TmvnMethod method = TmvnMethod::exact_tilting;
  double acceptance = 1.0;  // accept-reject rate actually observed
};

// P(Z <= upper) for Z ~ N(0, corr). Separation-of-variables over a
// randomly shifted lattice rule, with greedy variable reordering; dimensions
// 1-3 use deterministic formulas when safely inside linear range.
McdfResult mvn_cdf(const VectorXd& upper, const MatrixXd& corr,
                   double accuracy, const EngineConfig& cfg = {});
McdfResult mvn_cdf(const VectorXd& upper, const MatrixXd& corr,
                   const EngineConfig& cfg = {});

// P(X <= upper) for X ~ N(mean, cov); standardizes and delegates.
McdfResult mvn_cdf_shifted(const VectorXd& upper, const VectorXd& mean,
                           const MatrixXd& cov, double accuracy,
                           const EngineConfig& cfg = {});

// log P(X >= lower) of the spec's region.
double tmvn_log_prob(const TruncNormalSpec& spec, const EngineConfig& cfg = {});

// Exact-in-distribution i.i.d. draws via sequential proposals under minimax
// exponential tilting; falls back to burnt-in Gibbs sweeps (flagged in the
// result) when the acceptance rate drops below the configured floor.
TmvnSample sample_tmvn(const TruncNormalSpec& spec, std::size_t n,
                       RngStream& rng, const EngineConfig& cfg = {});

// First two moments of the truncated normal. dim 1 is closed form; higher
// dimensions use CDF-derivative identities with mvn_cdf as the primitive.
TnMoments tn_moments(const TruncNormalSpec& spec, const EngineConfig& cfg = {});

namespace detail {
// Moment recursion without the public dimension cap (callers manage cost).
TnMoments tallis_moments(const VectorXd& lower, const MatrixXd& cov,
                         const EngineConfig& cfg);
// Deterministic bivariate CDF (Drezner/Genz hybrid), |rho| <= 1.
double bvn_cdf(double b1, double b2, double rho);
}  // namespace detail

}  // namespace sunbayes
