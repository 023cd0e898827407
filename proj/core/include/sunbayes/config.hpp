#pragma once

#include <cstddef>
#include <cstdint>

namespace sunbayes {

// Settings for the quasi-Monte Carlo Gaussian CDF estimator.
struct MvnOptions {
  // Target absolute standard error of the probability estimate.
  double accuracy = 1e-4;
  // Optional relative target; 0 disables it. When set, iteration stops as
  // soon as either the absolute or the relative target is met.
  double rel_accuracy = 0.0;
  // Total budget of integrand evaluations per call (all shifts combined).
  std::size_t max_points = std::size_t{1} << 20;
  // Number of independent random shifts of the lattice rule.
  int n_shifts = 12;
  // Entries of the CDF argument are clamped to this magnitude for the
  // linear-scale recursion; log-scale accounting stays exact.
  double clamp = 37.0;
  std::uint64_t seed = 0x57b1e5eedULL;
};

// Settings for exact truncated-multivariate-normal sampling.
struct TmvnOptions {
  // Reject regions whose log-probability falls below this floor.
  double min_log_prob = -690.0;
  // Accept-reject acceptance-rate floor below which the sampler either
  // falls back to Gibbs sweeps or throws RegionTooImprobable.
  double min_acceptance = 1e-3;
  bool allow_gibbs_fallback = true;
  int gibbs_burnin = 50;
  int gibbs_thin = 5;
};

// Cholesky jitter ladder, relative to tr(S)/dim.
struct JitterOptions {
  double start = 1e-12;
  double max = 1e-6;
  double factor = 10.0;
};

// Engine-wide configuration shared by all modules.
struct EngineConfig {
  MvnOptions mvn;
  TmvnOptions tmvn;
  JitterOptions jitter;
  // Dimension cap for analytic truncated-normal moment formulas.
  int tn_moment_cap = 8;
  // Dimension cap for analytic SUN moments / CDF; beyond it callers must
  // fall back to sampling or to the deterministic approximations.
  int sun_dim_cap = 200;
  std::uint64_t seed = 20260808ULL;
};

}  // namespace sunbayes
