#include "sunbayes/normal.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sunbayes {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kLogSqrt2Pi = 0.9189385332046727418;
constexpr double kSqrt2Pi = 2.5066282746310005024;

// Mills ratio P(Z > x)/phi(x) for x >= 35, where the direct erfc ratio
// starts to lose headroom. Asymptotic series, truncation error ~1e-15 here.
double mills_ratio_tail(double x) {
  const double u = 1.0 / (x * x);
  const double series =
      1.0 - u * (1.0 - u * (3.0 - u * (15.0 - u * (105.0 - u * 945.0))));
  return series / x;
}
}  // namespace

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / kSqrt2Pi; }

double log_norm_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double norm_cdf_c(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

double norm_hazard(double x) {
  if (std::isinf(x)) return x > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  if (x < 35.0) {
    const double denom = norm_cdf_c(x);
    return norm_pdf(x) / denom;
  }
  return 1.0 / mills_ratio_tail(x);
}

double log_norm_cdf_c(double x) {
  if (std::isinf(x)) return x > 0 ? -std::numeric_limits<double>::infinity() : 0.0;
  if (x < 35.0) return std::log(norm_cdf_c(x));
  return log_norm_pdf(x) + std::log(mills_ratio_tail(x));
}

double log_norm_cdf(double x) { return log_norm_cdf_c(-x); }

double norm_quantile(double p) {
  // Wichura (1988), algorithm AS 241, PPND16.
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::domain_error("norm_quantile: p outside [0,1]");
  }
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double trunc_std_mean_lower(double a) {
  if (std::isinf(a) && a < 0) return 0.0;
  return norm_hazard(a);
}

double trunc_std_var_lower(double a) {
  if (std::isinf(a) && a < 0) return 1.0;
  const double h = norm_hazard(a);
  return 1.0 + a * h - h * h;
}

double sample_trunc_std_lower(double a, RngStream& rng) {
  if (std::isinf(a) && a < 0) return rng.normal();
  if (a < 0.4) {
    // Plain rejection; acceptance >= Phi(-0.4) ~ 0.34.
    double x;
    do {
      x = rng.normal();
    } while (x < a);
    return x;
  }
  // Rayleigh-tail rejection.
  const double c = 0.5 * a * a;
  double x;
  double v;
  do {
    x = c + rng.exponential();
    v = rng.uniform();
  } while (x * v * v > c);
  return std::sqrt(2.0 * x);
}

}  // namespace sunbayes
