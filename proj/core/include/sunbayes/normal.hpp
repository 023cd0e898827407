#pragma once

#include "sunbayes/rng.hpp"

namespace sunbayes {

// Scalar standard-normal primitives. All tail quantities are computed so
// that ratios and logarithms stay finite far beyond the linear-scale
// underflow point (|x| ~ 38).

double norm_pdf(double x);
double log_norm_pdf(double x);

// P(Z <= x).
double norm_cdf(double x);
// P(Z > x), accurate in the upper tail.
double norm_cdf_c(double x);
// log P(Z <= x), finite for any finite x.
double log_norm_cdf(double x);
// log P(Z > x).
double log_norm_cdf_c(double x);

// Hazard phi(x) / P(Z > x). Equals the reciprocal Mills ratio.
double norm_hazard(double x);

// Quantile function, Wichura's PPND16.
double norm_quantile(double p);

// Mean and variance of Z | Z >= a for Z ~ N(0,1).
double trunc_std_mean_lower(double a);
double trunc_std_var_lower(double a);

// Exact draw from Z | Z >= a (Rayleigh-tail rejection for large a).
double sample_trunc_std_lower(double a, RngStream& rng);
// Exact draw from Z | Z <= b.
inline double sample_trunc_std_upper(double b, RngStream& rng) {
  return -sample_trunc_std_lower(-b, rng);
}

}  // namespace sunbayes
