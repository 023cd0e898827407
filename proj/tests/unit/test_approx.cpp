#include <doctest.h>

#include <cmath>

#include "quadrature.hpp"
#include "stats.hpp"
#include "sunbayes/approx.hpp"
#include "sunbayes/errors.hpp"

using namespace sunbayes;

namespace {

PosteriorBundle linear_bundle(const EngineConfig& cfg) {
  Dataset d;
  d.x.resize(5, 2);
  d.x << 1.0, 0.2, 1.0, -0.4, 1.0, 0.9, 1.0, 0.5, 1.0, -1.1;
  d.y.resize(5);
  d.y << 0.6, -0.2, 1.1, 0.4, -0.9;
  const SunParams prior = SunParams::gaussian_prior(
      VectorXd::Zero(2), 5.0 * MatrixXd::Identity(2, 2));
  return update(prior, build_linear(d, 1.0), cfg);
}

PosteriorBundle probit_bundle(const EngineConfig& cfg, int n = 2) {
  Dataset d;
  d.x.resize(n, 1);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.x(i, 0) = 0.4 + 0.5 * i * (i % 2 ? -1 : 1);
    d.y(i) = i % 2 ? 0.0 : 1.0;
  }
  const SunParams prior = SunParams::gaussian_prior(
      VectorXd::Zero(1), 4.0 * MatrixXd::Identity(1, 1));
  return update(prior, build_probit(d), cfg);
}

PosteriorBundle tobit_bundle(const EngineConfig& cfg, int n, int p,
                             double kappa, std::uint64_t seed) {
  RngStream rng(seed);
  MatrixXd x(n, p);
  VectorXd beta(p);
  for (int j = 0; j < p; ++j) beta(j) = -1.5 + 3.0 * rng.uniform();
  VectorXd z(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) x(i, j) = 0.5 * rng.normal();
    z(i) = x.row(i).dot(beta) + rng.normal();
  }
  std::vector<double> sorted(z.data(), z.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const int n0 = std::max(1, static_cast<int>(kappa * n));
  const double cut = sorted[n0 - 1];
  Dataset d;
  d.x = x;
  d.y.resize(n);
  for (int i = 0; i < n; ++i) d.y(i) = z(i) > cut ? z(i) - cut : 0.0;
  const SunParams prior = SunParams::gaussian_prior(
      VectorXd::Zero(p), 10.0 * MatrixXd::Identity(p, p));
  return update(prior, build_tobit(d, 1.0), cfg);
}

double quad_posterior_mean(const PosteriorBundle& bundle,
                           const EngineConfig& cfg) {
  auto dens = [&](double b) {
    return std::exp(
        sun_log_density(bundle.posterior, VectorXd::Constant(1, b), cfg));
  };
  const double z = oracle::integrate(dens, -25.0, 25.0, 1e-10);
  return oracle::integrate([&](double b) { return b * dens(b); }, -25.0, 25.0,
                           1e-10) /
         z;
}

bool non_decreasing(const std::vector<double>& trace, double slack) {
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] < trace[i - 1] - slack) return false;
  return true;
}

}  // namespace

TEST_CASE("no latent block: every scheme is exact in at most one pass") {
  EngineConfig cfg;
  const PosteriorBundle bundle = linear_bundle(cfg);
  const VbState mf = mf_vb(bundle, {}, cfg);
  const VbState pfm = pfm_vb(bundle, {}, cfg);
  const EpState e = ep(bundle, {}, cfg);
  for (const VbState* st : {&mf, &pfm}) {
    CHECK(st->converged);
    CHECK(st->n_iter <= 1);
    CHECK((st->beta_mean - bundle.posterior.xi).cwiseAbs().maxCoeff() <=
          1e-12);
    CHECK((st->beta_cov - bundle.posterior.omega).cwiseAbs().maxCoeff() <=
          1e-12);
  }
  CHECK(e.converged);
  CHECK(e.n_iter <= 1);
  CHECK((e.mean - bundle.posterior.xi).cwiseAbs().maxCoeff() <= 1e-12);

  const EpState es = ep_scalable(bundle, {}, cfg);
  CHECK((es.mean - bundle.posterior.xi).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("mean-field on a single-site probit stays within the known bias") {
  EngineConfig cfg;
  const PosteriorBundle bundle = probit_bundle(cfg, 1);
  const double target = quad_posterior_mean(bundle, cfg);
  const VbState st = mf_vb(bundle, {}, cfg);
  CHECK(st.converged);
  CHECK(std::abs(st.beta_mean(0) - target) <= 0.10 * std::abs(target));
}

TEST_CASE("elbo traces are monotone on random tobit instances") {
  EngineConfig cfg;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const PosteriorBundle bundle = tobit_bundle(cfg, 14, 2, 0.5, seed);
    const VbState mf = mf_vb(bundle, {}, cfg);
    const VbState pfm = pfm_vb(bundle, {}, cfg);
    CHECK(non_decreasing(mf.elbo_trace, 1e-8));
    CHECK(non_decreasing(pfm.elbo_trace, 1e-8));
    // The partially factorized family contains the mean-field one.
    CHECK(pfm.elbo_trace.back() >= mf.elbo_trace.back() - 1e-8);
  }
}

TEST_CASE("pfm with a single block recovers the exact moments") {
  EngineConfig cfg;
  // One censored row gives a single latent site.
  const PosteriorBundle bundle = probit_bundle(cfg, 1);
  REQUIRE(bundle.partition.size() == 1);
  const VbState st = pfm_vb(bundle, {}, cfg);
  const SunMoments m = sun_moments(bundle.posterior, cfg);
  CHECK((st.beta_mean - m.mean).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((st.beta_cov - m.cov).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("pfm variance matrix is positive definite") {
  EngineConfig cfg;
  const PosteriorBundle bundle = tobit_bundle(cfg, 20, 3, 0.5, 33);
  const VbState st = pfm_vb(bundle, {}, cfg);
  Eigen::LLT<MatrixXd> llt(st.beta_cov);
  CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("single-site ep is exact") {
  EngineConfig cfg;
  const PosteriorBundle bundle = probit_bundle(cfg, 1);
  const EpState st = ep(bundle, {}, cfg);
  const SunMoments m = sun_moments(bundle.posterior, cfg);
  CHECK(st.converged);
  CHECK((st.mean - m.mean).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((st.cov - m.cov).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("ep mean is near-exact on a small probit") {
  EngineConfig cfg;
  const PosteriorBundle bundle = probit_bundle(cfg, 2);
  const double target = quad_posterior_mean(bundle, cfg);
  const EpState st = ep(bundle, {}, cfg);
  CHECK(st.converged);
  CHECK(std::abs(st.mean(0) - target) <= 1e-3);
}

TEST_CASE("ep evidence tracks the exact marginal likelihood") {
  EngineConfig cfg;
  for (std::uint64_t seed : {2, 9}) {
    const PosteriorBundle bundle = tobit_bundle(cfg, 16, 2, 0.5, seed);
    const EpState st = ep(bundle, {}, cfg);
    const double exact = log_marginal_likelihood(bundle, 1e-8, cfg);
    CHECK(std::abs(st.log_evidence - exact) <= 0.05);
  }
}

TEST_CASE("dense and scalable ep agree") {
  EngineConfig cfg;
  const PosteriorBundle bundle = tobit_bundle(cfg, 30, 8, 0.5, 14);
  const EpState dense = ep(bundle, {}, cfg);
  const EpState scal = ep_scalable(bundle, {}, cfg);
  CHECK(dense.converged);
  CHECK(scal.converged);
  CHECK((dense.mean - scal.mean).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((dense.cov_diag - scal.cov_diag).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(std::abs(dense.log_evidence - scal.log_evidence) <= 1e-8);
}

TEST_CASE("ep fixed point is sweep-order invariant") {
  EngineConfig cfg;
  const PosteriorBundle bundle = tobit_bundle(cfg, 18, 3, 0.5, 25);
  EpOptions forward;
  EpOptions backward;
  backward.reverse_order = true;
  const EpState a = ep(bundle, forward, cfg);
  const EpState b = ep(bundle, backward, cfg);
  CHECK(a.converged);
  CHECK(b.converged);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("approximations handle sun priors through the folded block") {
  EngineConfig cfg;
  // Skew prior turns into a leading latent site; every scheme must run.
  SunParams prior;
  prior.xi = VectorXd::Zero(1);
  prior.omega = 4.0 * MatrixXd::Identity(1, 1);
  prior.delta = MatrixXd::Constant(1, 1, 0.6);
  prior.gamma = VectorXd::Zero(1);
  prior.gamma_corr = MatrixXd::Identity(1, 1);
  Dataset d;
  d.x.resize(2, 1);
  d.x << 0.8, -0.5;
  d.y.resize(2);
  d.y << 1.0, 0.0;
  const PosteriorBundle bundle = update(prior, build_probit(d), cfg);
  REQUIRE(bundle.partition.size() == 3);  // prior block + 2 sites

  const double target = quad_posterior_mean(bundle, cfg);
  const EpState e = ep(bundle, {}, cfg);
  CHECK(std::abs(e.mean(0) - target) <= 5e-3);
  // At one coefficient and three latent sites the factorized schemes are
  // genuinely coarse; what must hold is the accuracy ordering.
  const VbState pfm = pfm_vb(bundle, {}, cfg);
  const VbState mf = mf_vb(bundle, {}, cfg);
  CHECK(std::abs(pfm.beta_mean(0) - target) <=
        std::abs(mf.beta_mean(0) - target));
  CHECK(std::abs(pfm.beta_mean(0) - target) <= 0.15);
}

TEST_CASE("ep rejects partition blocks beyond the moment cap") {
  EngineConfig cfg;
  cfg.tn_moment_cap = 2;
  Dataset d;
  d.y_mat.resize(1, 3);
  d.y_mat << 1.0, 0.0, 1.0;
  d.x.resize(3, 1);
  d.x << 0.4, -0.2, 0.7;
  const SunParams prior = SunParams::gaussian_prior(
      VectorXd::Zero(1), MatrixXd::Identity(1, 1));
  const PosteriorBundle bundle =
      update(prior, build_multivariate_probit(d, MatrixXd::Identity(3, 3)),
             cfg);
  CHECK_THROWS_AS(ep(bundle, {}, cfg), MomentDimExceeded);
}
