#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sov_internal.hpp"
#include "sunbayes/errors.hpp"
#include "sunbayes/mvn.hpp"
#include "sunbayes/normal.hpp"

namespace sunbayes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 6.2831853071795864769;
// Below this, deterministic small-dimension formulas hand over to the
// log-scale SOV path.
constexpr double kLinearFloor = 1e-250;

void validate_corr(const VectorXd& upper, const MatrixXd& corr) {
  if (corr.rows() != corr.cols() || corr.rows() != upper.size())
    throw DimensionMismatch("mvn_cdf: upper/corr dimensions disagree");
  require_symmetric(corr, 1e-10, "mvn_cdf");
  for (Eigen::Index i = 0; i < corr.rows(); ++i) {
    if (std::abs(corr(i, i) - 1.0) > 1e-8)
      throw DimensionMismatch("mvn_cdf: corr diagonal is not 1");
  }
}

// Gauss-Legendre pairs used by the bivariate rule.
struct GlRule {
  const double* x;
  const double* w;
  int n;
};

const double kGlX6[] = {-0.9324695142031522, -0.6612093864662647,
                        -0.2386191860831970};
const double kGlW6[] = {0.1713244923791705, 0.3607615730481384,
                        0.4679139345726904};
const double kGlX12[] = {-0.9815606342467191, -0.9041172563704750,
                         -0.7699026741943050, -0.5873179542866171,
                         -0.3678314989981802, -0.1252334085114692};
const double kGlW12[] = {0.04717533638651177, 0.1069393259953183,
                         0.1600783285433464,  0.2031674267230659,
                         0.2334925365383547,  0.2491470458134029};
const double kGlX20[] = {-0.9931285991850949,  -0.9639719272779138,
                         -0.9122344282513259,  -0.8391169718222188,
                         -0.7463319064601508,  -0.6360536807265150,
                         -0.5108670019508271,  -0.3737060887154196,
                         -0.2277858511416451,  -0.07652652113349733};
const double kGlW20[] = {0.01761400713915212, 0.04060142980038694,
                         0.06267204833410906, 0.08327674157670475,
                         0.1019301198172404,  0.1181945319615184,
                         0.1316886384491766,  0.1420961093183821,
                         0.1491729864726037,  0.1527533871307259};

// P(X > h, Y > k) for standard bivariate normal with correlation r.
// Genz's adaptation of Drezner & Wesolowsky.
double bvnu(double h, double k, double r) {
  if (h == kInf || k == kInf) return 0.0;
  if (h == -kInf) return k == -kInf ? 1.0 : norm_cdf_c(k);
  if (k == -kInf) return norm_cdf_c(h);
  if (r >= 1.0) return norm_cdf_c(std::max(h, k));
  if (r <= -1.0) return std::max(0.0, 1.0 - norm_cdf(h) - norm_cdf(k));

  GlRule rule;
  const double ar = std::abs(r);
  if (ar < 0.3)
    rule = {kGlX6, kGlW6, 3};
  else if (ar < 0.75)
    rule = {kGlX12, kGlW12, 6};
  else
    rule = {kGlX20, kGlW20, 10};

  double hk = h * k;
  double bvn = 0.0;
  if (ar < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = std::asin(r);
    for (int i = 0; i < rule.n; ++i) {
      for (int sign = -1; sign <= 1; sign += 2) {
        const double sn = std::sin(asr * (1.0 + sign * rule.x[i]) * 0.5);
        bvn += rule.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / (2.0 * kTwoPi) + norm_cdf_c(h) * norm_cdf_c(k);
    return std::clamp(bvn, 0.0, 1.0);
  }
  double kk = k;
  if (r < 0) {
    kk = -kk;
    hk = -hk;
  }
  const double as = (1.0 - r) * (1.0 + r);
  double a = std::sqrt(as);
  const double bs = (h - kk) * (h - kk);
  const double c = (4.0 - hk) / 8.0;
  const double d = (12.0 - hk) / 16.0;
  double asq = -(bs / as + hk) / 2.0;
  if (asq > -100.0)
    bvn = a * std::exp(asq) *
          (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 +
           c * d * as * as / 5.0);
  if (-hk < 100.0) {
    const double b = std::sqrt(bs);
    bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * norm_cdf(-b / a) * b *
           (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
  }
  a *= 0.5;
  for (int i = 0; i < rule.n; ++i) {
    for (int sign = -1; sign <= 1; sign += 2) {
      const double xs = std::pow(a * (1.0 + sign * rule.x[i]), 2);
      const double rs = std::sqrt(1.0 - xs);
      asq = -(bs / xs + hk) / 2.0;
      if (asq > -100.0) {
        bvn += a * rule.w[i] * std::exp(asq) *
               (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                (1.0 + c * xs * (1.0 + d * xs)));
      }
    }
  }
  bvn = -bvn / kTwoPi;
  if (r > 0) {
    bvn += norm_cdf_c(std::max(h, kk));
  } else {
    bvn = -bvn;
    if (kk > h) bvn += norm_cdf(kk) - norm_cdf(h);
  }
  return std::clamp(bvn, 0.0, 1.0);
}

// Trivariate P(Z <= b) by conditioning on the tightest coordinate and
// integrating the conditional bivariate CDF with panelled Gauss-Legendre.
double tvn_cdf(VectorXd b, MatrixXd r) {
  int pivot = 0;
  b.minCoeff(&pivot);
  if (pivot != 0) {
    std::swap(b(0), b(pivot));
    r.row(0).swap(r.row(pivot));
    r.col(0).swap(r.col(pivot));
  }
  const double r12 = r(0, 1);
  const double r13 = r(0, 2);
  const double r23 = r(1, 2);
  const double s2 = std::sqrt(std::max(1e-14, 1.0 - r12 * r12));
  const double s3 = std::sqrt(std::max(1e-14, 1.0 - r13 * r13));
  const double rc = std::clamp((r23 - r12 * r13) / (s2 * s3), -1.0, 1.0);
  const double hi = b(0);
  const double lo = std::min(hi, std::max(-40.0, hi > 0 ? -9.0 : hi - 40.0));
  const int n_panels = 24;
  const double width = (hi - lo) / n_panels;
  double acc = 0.0;
  for (int panel = 0; panel < n_panels; ++panel) {
    const double mid = lo + (panel + 0.5) * width;
    for (int i = 0; i < 10; ++i) {
      for (int sign = -1; sign <= 1; sign += 2) {
        const double t = mid + 0.5 * width * sign * kGlX20[i];
        const double c2 = (b(1) - r12 * t) / s2;
        const double c3 = (b(2) - r13 * t) / s3;
        acc += kGlW20[i] * norm_pdf(t) * bvnu(-c2, -c3, rc);
      }
    }
  }
  return std::clamp(acc * 0.5 * width, 0.0, 1.0);
}

struct ShiftAccum {
  double max_log = -kInf;
  double scaled_sum = 0.0;
  std::size_t count = 0;

  void add(double log_term) {
    if (log_term == -kInf) {
      ++count;
      return;
    }
    if (log_term > max_log) {
      scaled_sum = scaled_sum * std::exp(max_log - log_term) + 1.0;
      max_log = log_term;
    } else {
      scaled_sum += std::exp(log_term - max_log);
    }
    ++count;
  }

  // log of the running mean.
  double log_mean() const {
    if (count == 0 || scaled_sum == 0.0) return -kInf;
    return max_log + std::log(scaled_sum / static_cast<double>(count));
  }
};

McdfResult combine_shifts(const std::vector<ShiftAccum>& shifts) {
  const int s = static_cast<int>(shifts.size());
  double big = -kInf;
  for (const auto& sh : shifts) big = std::max(big, sh.log_mean());
  McdfResult out;
  std::size_t paths = 0;
  for (const auto& sh : shifts) paths += sh.count;
  out.n_samples = paths;
  if (big == -kInf) {
    out.value = 0.0;
    out.log_value = -kInf;
    out.std_error = 0.0;
    return out;
  }
  double mean = 0.0;
  double sq = 0.0;
  for (const auto& sh : shifts) {
    const double v = std::exp(sh.log_mean() - big);
    mean += v;
    sq += v * v;
  }
  mean /= s;
  const double var = std::max(0.0, (sq - s * mean * mean) / (s - 1.0));
  out.value = std::exp(big) * mean;
  out.log_value = big + std::log(mean);
  out.std_error = std::exp(big) * std::sqrt(var / s);
  return out;
}

// One SOV path: log prod_i Phi(c_i) along the sequential recursion driven
// by the uniforms w. Linear-scale conditioning is clamped; the log value
// accumulates exactly.
double sov_path(const detail::SovProblem& prob, const std::vector<double>& w,
                double clamp, VectorXd& y) {
  const int n = static_cast<int>(prob.upper.size());
  const MatrixXd& lo = prob.lower_chol;
  double log_prod = 0.0;
  for (int i = 0; i < n; ++i) {
    double num = prob.upper(i);
    for (int k = 0; k < i; ++k) num -= lo(i, k) * y(k);
    const double c = num / lo(i, i);
    log_prod += log_norm_cdf(c);
    if (log_prod == -kInf) return -kInf;
    if (i + 1 < n) {
      const double cc = std::min(c, clamp);
      if (cc < -30.0) {
        // Exponential tail: Z | Z <= cc is cc - Exp(|cc|)/|cc| to first order.
        y(i) = cc + std::log(std::max(w[i], 1e-280)) / std::abs(cc);
      } else {
        const double q = std::min(1.0 - 1e-16,
                                  std::max(1e-300, w[i] * norm_cdf(cc)));
        y(i) = norm_quantile(q);
      }
    }
  }
  return log_prod;
}

McdfResult sov_qmc(const detail::SovProblem& prob, double accuracy,
                   double rel_accuracy, const EngineConfig& cfg) {
  const int n = static_cast<int>(prob.upper.size());
  const int m = std::max(1, n - 1);
  const std::vector<double> gens = detail::lattice_generators(m);
  const int n_shifts = std::max(2, cfg.mvn.n_shifts);

  std::vector<std::vector<double>> offsets(n_shifts);
  RngStream root(cfg.mvn.seed);
  for (int s = 0; s < n_shifts; ++s) {
    RngStream stream = root.derive(static_cast<std::uint64_t>(s));
    offsets[s].resize(m);
    for (int j = 0; j < m; ++j) offsets[s][j] = stream.uniform();
  }

  std::vector<ShiftAccum> accum(n_shifts);
  VectorXd y(n);
  std::vector<double> w(m), wa(m);

  std::size_t done = 0;  // lattice points consumed across all shifts
  std::size_t batch = 128;
  std::size_t next_index = 1;
  McdfResult result;
  while (true) {
    for (std::size_t k = next_index; k < next_index + batch; ++k) {
      for (int s = 0; s < n_shifts; ++s) {
        for (int j = 0; j < m; ++j) {
          double v = std::fma(static_cast<double>(k), gens[j], offsets[s][j]);
          v -= std::floor(v);
          w[j] = v;
          wa[j] = 1.0 - v;
        }
        accum[s].add(sov_path(prob, w, cfg.mvn.clamp, y));
        accum[s].add(sov_path(prob, wa, cfg.mvn.clamp, y));
      }
      done += n_shifts;
    }
    next_index += batch;
    batch *= 2;
    result = combine_shifts(accum);
    const bool abs_ok = result.std_error <= accuracy;
    const bool rel_ok =
        rel_accuracy > 0.0 && result.std_error <= rel_accuracy * result.value;
    if (abs_ok || rel_ok || done >= cfg.mvn.max_points) break;
  }
  return result;
}

McdfResult deterministic_result(double value) {
  McdfResult out;
  out.value = std::clamp(value, 0.0, 1.0);
  out.log_value = out.value > 0 ? std::log(out.value) : -kInf;
  out.std_error = out.value > 0 ? 1e-14 : 0.0;
  out.n_samples = 0;
  return out;
}

McdfResult solve_component(const VectorXd& b, const MatrixXd& r,
                           double accuracy, double rel_accuracy,
                           const EngineConfig& cfg);

McdfResult mvn_cdf_impl(const VectorXd& upper, const MatrixXd& corr,
                        double accuracy, double rel_accuracy,
                        const EngineConfig& cfg) {
  validate_corr(upper, corr);
  const int n0 = static_cast<int>(upper.size());

  // -inf coordinate: probability is exactly zero.
  for (int i = 0; i < n0; ++i) {
    if (upper(i) == -kInf) {
      McdfResult zero;
      zero.log_value = -kInf;
      return zero;
    }
  }
  // +inf coordinates marginalize away.
  std::vector<int> keep;
  for (int i = 0; i < n0; ++i)
    if (upper(i) != kInf) keep.push_back(i);
  const int n = static_cast<int>(keep.size());
  if (n == 0) {
    McdfResult one;
    one.value = 1.0;
    one.log_value = 0.0;
    return one;
  }
  VectorXd b(n);
  MatrixXd r(n, n);
  for (int i = 0; i < n; ++i) {
    b(i) = upper(keep[i]);
    for (int j = 0; j < n; ++j) r(i, j) = corr(keep[i], keep[j]);
  }

  // Independent components of the correlation graph factor exactly.
  std::vector<int> component(n, -1);
  int n_components = 0;
  for (int seed_idx = 0; seed_idx < n; ++seed_idx) {
    if (component[seed_idx] >= 0) continue;
    std::vector<int> stack{seed_idx};
    component[seed_idx] = n_components;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (int j = 0; j < n; ++j) {
        if (component[j] < 0 && std::abs(r(i, j)) > 1e-14) {
          component[j] = n_components;
          stack.push_back(j);
        }
      }
    }
    ++n_components;
  }
  if (n_components > 1) {
    McdfResult total;
    total.value = 1.0;
    total.log_value = 0.0;
    double rel_var = 0.0;
    const double split_accuracy = accuracy / std::sqrt(n_components);
    for (int comp = 0; comp < n_components; ++comp) {
      std::vector<int> members;
      for (int i = 0; i < n; ++i)
        if (component[i] == comp) members.push_back(i);
      const int m = static_cast<int>(members.size());
      VectorXd bc(m);
      MatrixXd rc(m, m);
      for (int i = 0; i < m; ++i) {
        bc(i) = b(members[i]);
        for (int j = 0; j < m; ++j) rc(i, j) = r(members[i], members[j]);
      }
      const McdfResult part =
          solve_component(bc, rc, split_accuracy, rel_accuracy, cfg);
      total.value *= part.value;
      total.log_value += part.log_value;
      total.n_samples += part.n_samples;
      if (part.value > 0)
        rel_var += std::pow(part.std_error / part.value, 2);
    }
    total.std_error = total.value * std::sqrt(rel_var);
    return total;
  }
  return solve_component(b, r, accuracy, rel_accuracy, cfg);
}

McdfResult solve_component(const VectorXd& b, const MatrixXd& r,
                           double accuracy, double rel_accuracy,
                           const EngineConfig& cfg) {
  const int n = static_cast<int>(b.size());
  if (n == 1) {
    McdfResult out;
    out.value = norm_cdf(b(0));
    out.log_value = log_norm_cdf(b(0));
    out.std_error = out.value > 0 && out.value < 1 ? 1e-16 : 0.0;
    out.n_samples = 0;
    return out;
  }
  if (n == 2) {
    const double v = bvnu(-b(0), -b(1), r(0, 1));
    if (v > kLinearFloor) return deterministic_result(v);
  }
  if (n == 3) {
    const double v = tvn_cdf(b, r);
    if (v > kLinearFloor) return deterministic_result(v);
  }

  const CholResult feas = chol_jittered(r, cfg.jitter, "mvn_cdf");
  MatrixXd rj = r;
  if (feas.jitter > 0) rj.diagonal().array() += feas.jitter;
  const detail::SovProblem prob = detail::sov_prepare(b, rj);
  return sov_qmc(prob, accuracy, rel_accuracy, cfg);
}

}  // namespace

namespace detail {
double bvn_cdf(double b1, double b2, double rho) { return bvnu(-b1, -b2, rho); }
}  // namespace detail

McdfResult mvn_cdf(const VectorXd& upper, const MatrixXd& corr, double accuracy,
                   const EngineConfig& cfg) {
  return mvn_cdf_impl(upper, corr, accuracy, cfg.mvn.rel_accuracy, cfg);
}

McdfResult mvn_cdf(const VectorXd& upper, const MatrixXd& corr,
                   const EngineConfig& cfg) {
  return mvn_cdf_impl(upper, corr, cfg.mvn.accuracy, cfg.mvn.rel_accuracy, cfg);
}

McdfResult mvn_cdf_shifted(const VectorXd& upper, const VectorXd& mean,
                           const MatrixXd& cov, double accuracy,
                           const EngineConfig& cfg) {
  if (upper.size() != mean.size() || upper.size() != cov.rows())
    throw DimensionMismatch("mvn_cdf_shifted: dimensions disagree");
  require_symmetric(cov, 1e-10, "mvn_cdf_shifted");
  const SdCorr sc = to_correlation(cov);
  VectorXd b(upper.size());
  for (Eigen::Index i = 0; i < upper.size(); ++i) {
    if (upper(i) == kInf)
      b(i) = kInf;
    else if (upper(i) == -kInf)
      b(i) = -kInf;
    else
      b(i) = (upper(i) - mean(i)) / sc.sd(i);
  }
  return mvn_cdf(b, sc.corr, accuracy, cfg);
}

double tmvn_log_prob(const TruncNormalSpec& spec, const EngineConfig& cfg) {
  if (spec.lower.size() != spec.mean.size() ||
      spec.lower.size() != spec.cov.rows())
    throw DimensionMismatch("tmvn_log_prob: dimensions disagree");
  // P(X >= lower) = P(-X <= -lower), and -X has the same covariance.
  VectorXd flipped(spec.lower.size());
  for (Eigen::Index i = 0; i < spec.lower.size(); ++i)
    flipped(i) = spec.lower(i) == -kInf ? kInf : -spec.lower(i);
  return mvn_cdf_shifted(flipped, -spec.mean, spec.cov, cfg.mvn.accuracy, cfg)
      .log_value;
}

}  // namespace sunbayes
