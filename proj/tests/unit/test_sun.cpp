#include <doctest.h>

#include <cmath>
#include <random>

#include "quadrature.hpp"
#include "stats.hpp"
#include "sunbayes/errors.hpp"
#include "sunbayes/sun.hpp"

using namespace sunbayes;

namespace {

// Classical scalar skew-normal as a SunParams instance.
SunParams skew_normal(double alpha) {
  const double delta = alpha / std::sqrt(1.0 + alpha * alpha);
  SunParams p;
  p.xi = VectorXd::Zero(1);
  p.omega = MatrixXd::Identity(1, 1);
  p.delta = MatrixXd::Constant(1, 1, delta);
  p.gamma = VectorXd::Zero(1);
  p.gamma_corr = MatrixXd::Identity(1, 1);
  return p;
}

// Random valid parameter set with scalar coefficient and q latent dims.
SunParams random_params(std::mt19937& gen, int q) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  SunParams p;
  p.xi = VectorXd::Constant(1, 2.0 * unif(gen));
  p.omega = MatrixXd::Constant(1, 1, 0.5 + 1.5 * std::abs(unif(gen)));
  p.gamma = VectorXd::Zero(q);
  for (int i = 0; i < q; ++i) p.gamma(i) = unif(gen);
  MatrixXd root = MatrixXd::Zero(q + 1, q + 1);
  for (int i = 0; i <= q; ++i)
    for (int j = 0; j <= q; ++j) root(i, j) = unif(gen);
  MatrixXd joint = root * root.transpose() +
                   0.4 * MatrixXd::Identity(q + 1, q + 1);
  const VectorXd sd = joint.diagonal().array().sqrt();
  joint = sd.array().inverse().matrix().asDiagonal() * joint *
          sd.array().inverse().matrix().asDiagonal();
  p.delta = joint.block(0, 1, 1, q);
  p.gamma_corr = joint.block(1, 1, q, q);
  return canonicalize(p);
}

}  // namespace

TEST_CASE("gaussian reduction of the density") {
  EngineConfig cfg;
  SunParams p;
  p.xi = VectorXd::Constant(1, 0.3);
  p.omega = MatrixXd::Constant(1, 1, 2.0);
  p.delta = MatrixXd::Zero(1, 1);
  p.gamma = VectorXd::Constant(1, 0.4);
  p.gamma_corr = MatrixXd::Identity(1, 1);
  for (double b : {-1.0, 0.0, 0.7, 2.5}) {
    const double expected =
        -0.5 * (b - 0.3) * (b - 0.3) / 2.0 - 0.5 * std::log(2.0 * M_PI * 2.0);
    CHECK(sun_log_density(p, VectorXd::Constant(1, b), cfg) ==
          doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("scalar skew-normal density closed form") {
  EngineConfig cfg;
  const double alpha = 1.0;
  const SunParams p = skew_normal(alpha);
  for (double b : {-1.0, 0.0, 1.0}) {
    const double expected =
        std::log(2.0) - 0.5 * b * b - 0.5 * std::log(2.0 * M_PI) +
        std::log(0.5 * std::erfc(-alpha * b / std::sqrt(2.0)));
    CHECK(sun_log_density(p, VectorXd::Constant(1, b), cfg) ==
          doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("density integrates to one across random parameter sets") {
  EngineConfig cfg;
  std::mt19937 gen(42);
  for (int rep = 0; rep < 50; ++rep) {
    const int q = 1 + rep % 3;
    const SunParams p = random_params(gen, q);
    const double sd = std::sqrt(p.omega(0, 0));
    const double total = oracle::integrate(
        [&](double b) {
          return std::exp(sun_log_density(p, VectorXd::Constant(1, b), cfg));
        },
        p.xi(0) - 12 * sd, p.xi(0) + 12 * sd, 1e-10);
    CHECK(total == doctest::Approx(1.0).epsilon(2e-8));
  }
}

TEST_CASE("mgf basics and quadrature cross-check") {
  EngineConfig cfg;
  const SunParams p = skew_normal(1.0);
  CHECK(sun_mgf(p, VectorXd::Zero(1), cfg) ==
        doctest::Approx(1.0).epsilon(1e-12));

  SunParams gauss;
  gauss.xi = VectorXd::Constant(1, 0.5);
  gauss.omega = MatrixXd::Constant(1, 1, 1.5);
  gauss.delta = MatrixXd::Zero(1, 2);
  gauss.gamma = VectorXd::Zero(2);
  gauss.gamma_corr = MatrixXd::Identity(2, 2);
  VectorXd t = VectorXd::Constant(1, 0.7);
  CHECK(sun_log_mgf(gauss, t, cfg) ==
        doctest::Approx(0.5 * 0.7 + 0.5 * 0.7 * 0.7 * 1.5).epsilon(1e-12));

  for (double tv : {-0.5, 0.4, 1.1}) {
    const double direct = oracle::integrate(
        [&](double b) {
          return std::exp(tv * b +
                          sun_log_density(p, VectorXd::Constant(1, b), cfg));
        },
        -14.0, 14.0, 1e-11);
    CHECK(sun_mgf(p, VectorXd::Constant(1, tv), cfg) ==
          doctest::Approx(direct).epsilon(1e-6));
  }
}

TEST_CASE("moments: closed forms and mgf gradient") {
  EngineConfig cfg;
  const double delta = 1.0 / std::sqrt(2.0);
  const SunParams p = skew_normal(1.0);
  const SunMoments m = sun_moments(p, cfg);
  CHECK(m.mean(0) ==
        doctest::Approx(std::sqrt(2.0 / M_PI) * delta).epsilon(1e-8));
  CHECK(m.cov(0, 0) ==
        doctest::Approx(1.0 - 2.0 / M_PI * delta * delta).epsilon(1e-8));

  SunParams gauss = p;
  gauss.delta.setZero();
  const SunMoments mg = sun_moments(gauss, cfg);
  CHECK(mg.mean(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mg.cov(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  // Numerical gradient of log mgf at zero equals the mean.
  std::mt19937 gen(7);
  for (int rep = 0; rep < 5; ++rep) {
    const SunParams rp = random_params(gen, 2);
    const SunMoments rm = sun_moments(rp, cfg);
    const double h = 1e-5;
    const double up = sun_log_mgf(rp, VectorXd::Constant(1, h), cfg);
    const double dn = sun_log_mgf(rp, VectorXd::Constant(1, -h), cfg);
    CHECK((up - dn) / (2 * h) == doctest::Approx(rm.mean(0)).epsilon(1e-5));
  }
}

TEST_CASE("sampling agrees with analytic moments") {
  EngineConfig cfg;
  std::mt19937 gen(21);
  const SunParams p = random_params(gen, 2);
  RngStream rng(555);
  const SunSample s = sun_sample(p, 200000, rng, cfg);
  const SunMoments m = sun_moments(p, cfg);
  const double se = oracle::col_se(s.draws, 0);
  CHECK(std::abs(oracle::col_mean(s.draws, 0) - m.mean(0)) <= 3.5 * se);
  CHECK(oracle::col_var(s.draws, 0) ==
        doctest::Approx(m.cov(0, 0)).epsilon(0.02));

  SunParams gauss;
  gauss.xi = VectorXd::Constant(2, 1.0);
  gauss.omega = MatrixXd::Identity(2, 2);
  gauss.omega(0, 1) = gauss.omega(1, 0) = 0.4;
  gauss.delta = MatrixXd(2, 0);
  gauss.gamma = VectorXd(0);
  gauss.gamma_corr = MatrixXd(0, 0);
  RngStream rng2(556);
  const SunSample gs = sun_sample(gauss, 100000, rng2, cfg);
  CHECK(oracle::col_cov(gs.draws, 0, 1) == doctest::Approx(0.4).epsilon(0.05));

  RngStream ra(99), rb(99);
  const SunSample sa = sun_sample(p, 64, ra, cfg);
  const SunSample sb = sun_sample(p, 64, rb, cfg);
  CHECK((sa.draws - sb.draws).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cdf: limits, gaussian reduction, quarter point") {
  EngineConfig cfg;
  const SunParams p = skew_normal(1.0);
  const McdfResult far = sun_cdf(p, VectorXd::Constant(1, 30.0), 1e-8, cfg);
  CHECK(far.value == doctest::Approx(1.0).epsilon(1e-7));

  SunParams gauss = p;
  gauss.delta.setZero();
  const McdfResult g = sun_cdf(gauss, VectorXd::Constant(1, 1.0), 1e-8, cfg);
  CHECK(g.value == doctest::Approx(0.5 * std::erfc(-1.0 / std::sqrt(2.0)))
                       .epsilon(1e-11));

  // SN(0, 1, 1) has P(X <= 0) = 1/4; cross-checked by quadrature.
  const McdfResult q = sun_cdf(p, VectorXd::Zero(1), 1e-9, cfg);
  CHECK(q.value == doctest::Approx(0.25).epsilon(1e-7));
  const double direct = oracle::integrate(
      [&](double b) {
        return std::exp(sun_log_density(p, VectorXd::Constant(1, b), cfg));
      },
      -13.0, 0.0, 1e-11);
  CHECK(q.value == doctest::Approx(direct).epsilon(1e-6));
}

TEST_CASE("marginalization") {
  EngineConfig cfg;
  SunParams p;
  p.xi = VectorXd(2);
  p.xi << 0.5, -0.3;
  p.omega = MatrixXd::Identity(2, 2);
  p.omega(0, 0) = 2.0;
  p.delta = MatrixXd::Zero(2, 1);
  p.delta(0, 0) = 0.6;
  p.gamma = VectorXd::Zero(1);
  p.gamma_corr = MatrixXd::Identity(1, 1);

  const SunParams full = sun_marginal(p, {0, 1});
  CHECK(sun_params_close(full, p, 1e-12));

  // Coordinate 2 has a zero skewness row: its marginal is Gaussian.
  const SunParams second = sun_marginal(p, {1});
  const SunMoments m2 = sun_moments(second, cfg);
  CHECK(m2.mean(0) == doctest::Approx(-0.3).epsilon(1e-10));
  CHECK(m2.cov(0, 0) == doctest::Approx(1.0).epsilon(1e-10));

  CHECK_THROWS_AS(sun_marginal(p, {}), EmptyIndexSet);

  const SunParams first = sun_marginal(p, {0});
  RngStream rng(404);
  const SunSample joint = sun_sample(p, 200000, rng, cfg);
  const SunMoments m1 = sun_moments(first, cfg);
  const double se = oracle::col_se(joint.draws, 0);
  CHECK(std::abs(oracle::col_mean(joint.draws, 0) - m1.mean(0)) <= 3.5 * se);
}

TEST_CASE("linear transformation") {
  EngineConfig cfg;
  std::mt19937 gen(77);
  const SunParams p1 = random_params(gen, 2);
  // Lift to two coefficients with an independent Gaussian coordinate.
  SunParams p;
  p.xi = VectorXd(2);
  p.xi << p1.xi(0), 1.0;
  p.omega = MatrixXd::Identity(2, 2);
  p.omega(0, 0) = p1.omega(0, 0);
  p.delta = MatrixXd::Zero(2, 2);
  p.delta.row(0) = p1.delta.row(0);
  p.gamma = p1.gamma;
  p.gamma_corr = p1.gamma_corr;

  const SunParams same =
      sun_linear(p, MatrixXd::Identity(2, 2), VectorXd::Zero(2), cfg);
  CHECK(sun_params_close(same, p, 1e-10));

  MatrixXd a(1, 2);
  a << 0.7, -0.4;
  VectorXd shift = VectorXd::Constant(1, 0.25);
  const SunParams lin = sun_linear(p, a, shift, cfg);
  const SunMoments ml = sun_moments(lin, cfg);
  const SunMoments mp = sun_moments(p, cfg);
  CHECK(ml.mean(0) == doctest::Approx((a * mp.mean)(0) + 0.25).epsilon(1e-8));
  CHECK(ml.cov(0, 0) ==
        doctest::Approx((a * mp.cov * a.transpose())(0, 0)).epsilon(1e-8));

  RngStream rng(31);
  const SunSample sp = sun_sample(p, 150000, rng, cfg);
  const VectorXd projected =
      sp.draws * a.transpose() + VectorXd::Constant(150000, 0.25);
  RngStream rng2(32);
  const SunSample sl = sun_sample(lin, 150000, rng2, cfg);
  const double mean_a = projected.mean();
  const double mean_b = sl.draws.col(0).mean();
  const double se = std::sqrt((projected.array() - mean_a).square().sum() /
                              (150000.0 - 1) / 150000.0);
  CHECK(std::abs(mean_a - mean_b) <= 4.0 * se);

  MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 4.0;
  CHECK_THROWS_AS(sun_linear(p, bad, VectorXd::Zero(2), cfg), RankDeficient);

  // Marginal-of-linear coherence.
  MatrixXd unit = MatrixXd::Zero(1, 2);
  unit(0, 0) = 1.0;
  const SunParams via_linear = sun_linear(p, unit, VectorXd::Zero(1), cfg);
  const SunParams via_marginal = sun_marginal(p, {0});
  CHECK(sun_params_close(via_linear, via_marginal, 1e-10));
}

TEST_CASE("canonicalization absorbs scale into the latent block") {
  SunParams p = skew_normal(0.8);
  SunParams scaled = p;
  scaled.gamma_corr = MatrixXd::Constant(1, 1, 4.0);
  scaled.gamma *= 2.0;
  scaled.delta *= 2.0;
  const SunParams canon = canonicalize(scaled);
  CHECK(sun_params_close(canon, p, 1e-12));
}

TEST_CASE("bivariate coefficient case: cdf and mgf gradient") {
  EngineConfig cfg;
  // Two coefficients, two latent dims, nontrivial couplings.
  SunParams p;
  p.xi = VectorXd(2);
  p.xi << 0.2, -0.4;
  p.omega = MatrixXd(2, 2);
  p.omega << 1.5, 0.4, 0.4, 0.9;
  p.delta = MatrixXd(2, 2);
  p.delta << 0.5, 0.1, -0.2, 0.4;
  p.gamma = VectorXd(2);
  p.gamma << 0.3, -0.1;
  p.gamma_corr = MatrixXd(2, 2);
  p.gamma_corr << 1.0, 0.25, 0.25, 1.0;
  const SunParams params = canonicalize(p, cfg);

  // Empirical CDF from draws against the analytic value.
  RngStream rng(2468);
  const SunSample s = sun_sample(params, 400000, rng, cfg);
  VectorXd b(2);
  b << 0.5, 0.1;
  const McdfResult analytic = sun_cdf(params, b, 1e-8, cfg);
  double hits = 0.0;
  for (Eigen::Index i = 0; i < s.draws.rows(); ++i)
    hits += (s.draws(i, 0) <= b(0) && s.draws(i, 1) <= b(1)) ? 1.0 : 0.0;
  const double emp = hits / s.draws.rows();
  const double se = std::sqrt(emp * (1.0 - emp) / s.draws.rows());
  CHECK(std::abs(analytic.value - emp) <= 3.5 * se + 3.0 * analytic.std_error);

  // MGF gradient at zero equals the mean, coordinate by coordinate.
  const SunMoments m = sun_moments(params, cfg);
  const double h = 1e-5;
  for (int j = 0; j < 2; ++j) {
    VectorXd tp = VectorXd::Zero(2), tm = VectorXd::Zero(2);
    tp(j) = h;
    tm(j) = -h;
    const double grad =
        (sun_log_mgf(params, tp, cfg) - sun_log_mgf(params, tm, cfg)) /
        (2.0 * h);
    CHECK(grad == doctest::Approx(m.mean(j)).epsilon(1e-5));
  }

  // Sampled moments agree with the analytic ones.
  for (int j = 0; j < 2; ++j) {
    const double se_j = oracle::col_se(s.draws, j);
    CHECK(std::abs(oracle::col_mean(s.draws, j) - m.mean(j)) <= 3.5 * se_j);
    CHECK(oracle::col_var(s.draws, j) ==
          doctest::Approx(m.cov(j, j)).epsilon(0.02));
  }
  CHECK(oracle::col_cov(s.draws, 0, 1) ==
        doctest::Approx(m.cov(0, 1)).epsilon(0.05));
}
