#include <doctest.h>

#include <cmath>

#include "quadrature.hpp"
#include "stats.hpp"
#include "sunbayes/samplers.hpp"

using namespace sunbayes;

namespace {

PosteriorBundle probit_bundle(const EngineConfig& cfg) {
  Dataset d;
  d.x.resize(2, 1);
  d.x << 1.0, -0.6;
  d.y.resize(2);
  d.y << 1.0, 0.0;
  const SunParams prior = SunParams::gaussian_prior(
      VectorXd::Zero(1), 4.0 * MatrixXd::Identity(1, 1));
  return update(prior, build_probit(d), cfg);
}

PosteriorBundle tobit_bundle(const EngineConfig& cfg, int n, int p,
                             double kappa, std::uint64_t seed) {
  RngStream rng(seed);
  MatrixXd x(n, p);
  VectorXd beta(p);
  for (int j = 0; j < p; ++j) beta(j) = -1.0 + 2.0 * rng.uniform();
  VectorXd z(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) x(i, j) = 0.5 * rng.normal();
    z(i) = x.row(i).dot(beta) + rng.normal();
  }
  std::vector<double> sorted(z.data(), z.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double cut = sorted[static_cast<int>(kappa * n) - 1];
  Dataset d;
  d.x = x;
  d.y.resize(n);
  for (int i = 0; i < n; ++i) d.y(i) = z(i) > cut ? z(i) - cut : 0.0;
  const SunParams prior = SunParams::gaussian_prior(
      VectorXd::Zero(p), 10.0 * MatrixXd::Identity(p, p));
  return update(prior, build_tobit(d, 1.0), cfg);
}

// Posterior mean of the scalar probit coefficient by quadrature.
double probit_quad_mean(const PosteriorBundle& bundle, const EngineConfig& cfg) {
  auto dens = [&](double b) {
    return std::exp(
        sun_log_density(bundle.posterior, VectorXd::Constant(1, b), cfg));
  };
  const double z = oracle::integrate(dens, -20.0, 20.0, 1e-10);
  const double m =
      oracle::integrate([&](double b) { return b * dens(b); }, -20, 20, 1e-10);
  return m / z;
}

}  // namespace

TEST_CASE("gibbs with no latent block is iid gaussian") {
  EngineConfig cfg;
  Dataset d;
  d.x.resize(4, 2);
  d.x << 1.0, 0.4, 1.0, -0.2, 1.0, 0.9, 1.0, 0.1;
  d.y.resize(4);
  d.y << 0.8, -0.1, 1.4, 0.3;
  const SunParams prior = SunParams::gaussian_prior(
      VectorXd::Zero(2), 3.0 * MatrixXd::Identity(2, 2));
  const PosteriorBundle bundle = update(prior, build_linear(d, 1.0), cfg);
  RngStream rng(808);
  const ChainOutput chain = gibbs(bundle, 60000, rng, GibbsOptions{0}, cfg);
  for (int j = 0; j < 2; ++j) {
    const double se = oracle::col_se(chain.draws, j);
    CHECK(std::abs(oracle::col_mean(chain.draws, j) -
                   bundle.posterior.xi(j)) <= 3.5 * se);
    CHECK(oracle::col_var(chain.draws, j) ==
          doctest::Approx(bundle.posterior.omega(j, j)).epsilon(0.05));
  }
}

TEST_CASE("gibbs matches the quadrature posterior mean on probit") {
  EngineConfig cfg;
  const PosteriorBundle bundle = probit_bundle(cfg);
  const double target = probit_quad_mean(bundle, cfg);
  RngStream rng(99);
  GibbsOptions opts;
  opts.burn_in = 500;
  const ChainOutput chain = gibbs(bundle, 40000, rng, opts, cfg);
  const double ess = effective_sample_size(chain.draws.col(0));
  const double sd = std::sqrt(oracle::col_var(chain.draws, 0));
  const double se = sd / std::sqrt(ess);
  CHECK(std::abs(oracle::col_mean(chain.draws, 0) - target) <= 3.0 * se);
  CHECK(ess > 1000.0);
}

TEST_CASE("gibbs keeps the latent block positive and is reproducible") {
  EngineConfig cfg;
  const PosteriorBundle bundle = probit_bundle(cfg);
  GibbsOptions opts;
  opts.burn_in = 10;
  opts.keep_z = true;
  RngStream a(5), b(5);
  const ChainOutput ca = gibbs(bundle, 200, a, opts, cfg);
  const ChainOutput cb = gibbs(bundle, 200, b, opts, cfg);
  CHECK((ca.draws - cb.draws).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ca.z_draws.minCoeff() > 0.0);
}

TEST_CASE("iid routes agree with each other and with sun_sample") {
  EngineConfig cfg;
  const PosteriorBundle bundle = probit_bundle(cfg);
  const std::size_t n = 100000;
  RngStream r1(41), r2(42), r3(43);
  const ChainOutput marginal =
      iid(bundle, n, r1, IidRoute::marginal_latent, cfg);
  const ChainOutput additive = iid(bundle, n, r2, IidRoute::additive, cfg);
  const SunSample direct = sun_sample(bundle.posterior, n, r3, cfg);

  const double se = oracle::col_se(marginal.draws, 0) +
                    oracle::col_se(additive.draws, 0);
  CHECK(std::abs(oracle::col_mean(marginal.draws, 0) -
                 oracle::col_mean(additive.draws, 0)) <= 3.0 * se);
  const double se2 =
      oracle::col_se(marginal.draws, 0) + oracle::col_se(direct.draws, 0);
  CHECK(std::abs(oracle::col_mean(marginal.draws, 0) -
                 oracle::col_mean(direct.draws, 0)) <= 3.0 * se2);
  CHECK(oracle::col_var(marginal.draws, 0) ==
        doctest::Approx(oracle::col_var(additive.draws, 0)).epsilon(0.05));

  // Moments also agree with the analytic ones.
  const SunMoments m = sun_moments(bundle.posterior, cfg);
  CHECK(std::abs(oracle::col_mean(marginal.draws, 0) - m.mean(0)) <=
        3.0 * oracle::col_se(marginal.draws, 0));
}

TEST_CASE("gibbs and iid agree on a tobit instance") {
  EngineConfig cfg;
  const PosteriorBundle bundle = tobit_bundle(cfg, 24, 3, 0.5, 7);
  RngStream r1(11), r2(12);
  const ChainOutput exact = iid(bundle, 60000, r1, IidRoute::automatic, cfg);
  CHECK(exact.exact);
  GibbsOptions opts;
  opts.burn_in = 1000;
  const ChainOutput chain = gibbs(bundle, 60000, r2, opts, cfg);
  for (int j = 0; j < 3; ++j) {
    const double ess = effective_sample_size(chain.draws.col(j));
    const double se_g =
        std::sqrt(oracle::col_var(chain.draws, j) / std::max(1.0, ess));
    const double se_i = oracle::col_se(exact.draws, j);
    CHECK(std::abs(oracle::col_mean(chain.draws, j) -
                   oracle::col_mean(exact.draws, j)) <=
          3.0 * (se_g + se_i));
  }
}

TEST_CASE("functional stability across seeds matches the 1/sqrt(n) law") {
  EngineConfig cfg;
  const PosteriorBundle bundle = tobit_bundle(cfg, 40, 4, 0.5, 21);
  std::vector<double> means;
  for (std::uint64_t seed : {101, 102, 103, 104, 105, 106}) {
    RngStream rng(seed);
    const ChainOutput draws = iid(bundle, 4000, rng, IidRoute::automatic, cfg);
    means.push_back(oracle::col_mean(draws.draws, 1));
  }
  double mbar = 0.0;
  for (double m : means) mbar += m;
  mbar /= means.size();
  double spread = 0.0;
  for (double m : means) spread = std::max(spread, std::abs(m - mbar));
  // Seed-to-seed spread should be on the MC-noise scale, not larger.
  RngStream rng(200);
  const ChainOutput probe = iid(bundle, 4000, rng, IidRoute::automatic, cfg);
  const double se = oracle::col_se(probe.draws, 1);
  CHECK(spread <= 5.0 * se);
}

TEST_CASE("two-dimensional latent blocks: sn-probit gibbs vs quadrature") {
  EngineConfig cfg;
  Dataset d;
  d.x.resize(2, 1);
  d.x << 0.9, -0.7;
  d.y.resize(2);
  d.y << 1.0, 0.0;
  const SunParams prior = SunParams::gaussian_prior(
      VectorXd::Zero(1), 4.0 * MatrixXd::Identity(1, 1));
  const PosteriorBundle bundle =
      update(prior, build_sn_probit(d, 1.0, 1.1), cfg);
  REQUIRE(bundle.partition == std::vector<int>({2, 2}));

  auto dens = [&](double b) {
    return std::exp(
        sun_log_density(bundle.posterior, VectorXd::Constant(1, b), cfg));
  };
  const double z = oracle::integrate(dens, -20.0, 20.0, 1e-10);
  const double target =
      oracle::integrate([&](double b) { return b * dens(b); }, -20, 20,
                        1e-10) /
      z;

  RngStream r1(61), r2(62);
  GibbsOptions opts;
  opts.burn_in = 500;
  const ChainOutput chain = gibbs(bundle, 40000, r1, opts, cfg);
  const double ess = effective_sample_size(chain.draws.col(0));
  const double se_g =
      std::sqrt(oracle::col_var(chain.draws, 0) / std::max(1.0, ess));
  CHECK(std::abs(oracle::col_mean(chain.draws, 0) - target) <= 3.5 * se_g);

  const ChainOutput exact = iid(bundle, 40000, r2, IidRoute::automatic, cfg);
  const double se_i = oracle::col_se(exact.draws, 0);
  CHECK(std::abs(oracle::col_mean(exact.draws, 0) - target) <= 3.5 * se_i);
}
