#include <doctest.h>

#include <cmath>
#include <random>

#include "quadrature.hpp"
#include "sunbayes/errors.hpp"
#include "sunbayes/models.hpp"
#include "sunbayes/normal.hpp"

using namespace sunbayes;

namespace {

double phi1(double v, double var) {
  return std::exp(-0.5 * v * v / var) / std::sqrt(2.0 * M_PI * var);
}
double Phi1(double v, double var) {
  return 0.5 * std::erfc(-v / std::sqrt(2.0 * var));
}

// Bivariate normal CDF by raw 2-d quadrature; slow but independent.
double Phi2_quad(double b1, double b2, const MatrixXd& cov) {
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
  auto dens = [&](double x, double y) {
    const double q = (cov(1, 1) * x * x - 2.0 * cov(0, 1) * x * y +
                      cov(0, 0) * y * y) /
                     det;
    return std::exp(-0.5 * q) / (2.0 * M_PI * std::sqrt(det));
  };
  const double s1 = std::sqrt(cov(0, 0));
  const double s2 = std::sqrt(cov(1, 1));
  return oracle::integrate2d(dens, b1 - 9.0 * s1, b1, b2 - 9.0 * s2, b2, 100);
}

// Skew-normal density with location m, scale s2, shape a.
double sn_pdf(double z, double m, double s2, double a) {
  const double s = std::sqrt(s2);
  const double u = (z - m) / s;
  return 2.0 / s * norm_pdf(u) * norm_cdf(a * u);
}

Dataset small_regression() {
  Dataset d;
  d.x.resize(3, 2);
  d.x << 1.0, 0.4, 1.0, -0.8, 1.0, 1.5;
  d.y.resize(3);
  d.y << 0.7, -0.2, 1.9;
  return d;
}

}  // namespace

TEST_CASE("linear builder structure and evaluation") {
  EngineConfig cfg;
  Dataset d = small_regression();
  const UnifiedLikelihood lik = build_linear(d, 1.3);
  REQUIRE(lik.gauss.has_value());
  CHECK(!lik.cdf.has_value());
  CHECK(lik.gauss->sigma1.isApprox(1.3 * MatrixXd::Identity(3, 3)));
  CHECK_THROWS_AS(build_linear(d, 0.0), NonPositiveVariance);

  VectorXd beta(2);
  beta << 0.5, -1.0;
  double direct = 0.0;
  for (int i = 0; i < 3; ++i)
    direct += std::log(phi1(d.y(i) - d.x.row(i).dot(beta), 1.3));
  CHECK(log_likelihood(lik, beta, cfg) ==
        doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("multivariate linear builder uses the Kronecker noise") {
  Dataset d;
  const int n = 2, m = 2, p = 2;
  d.y_mat.resize(n, m);
  d.y_mat << 0.3, -0.6, 1.1, 0.2;
  d.x.resize(n * m, p);
  d.x << 1.0, 0.2, 0.0, 1.0, 1.0, -0.5, 0.0, 1.0;
  MatrixXd sigma(2, 2);
  sigma << 1.0, 0.3, 0.3, 2.0;
  const UnifiedLikelihood lik = build_linear_mv(d, sigma);
  REQUIRE(lik.gauss.has_value());
  CHECK(lik.gauss->sigma1.block(0, 0, 2, 2).isApprox(sigma));
  CHECK(lik.gauss->sigma1.block(2, 2, 2, 2).isApprox(sigma));
  CHECK(lik.gauss->sigma1.block(0, 2, 2, 2).isZero());
}

TEST_CASE("probit builder: sign mapping and likelihood") {
  EngineConfig cfg;
  Dataset d;
  d.x.resize(2, 2);
  d.x << 0.5, 1.0, -0.3, 0.8;
  d.y.resize(2);
  d.y << 1.0, 0.0;
  const UnifiedLikelihood lik = build_probit(d);
  REQUIRE(lik.cdf.has_value());
  CHECK(lik.cdf->x0.row(0).isApprox(d.x.row(0)));
  CHECK(lik.cdf->x0.row(1).isApprox(-d.x.row(1)));
  CHECK(lik.cdf->y0.isZero());
  CHECK(lik.cdf->partition == std::vector<int>(2, 1));

  Dataset all_ones = d;
  all_ones.y << 1.0, 1.0;
  CHECK(build_probit(all_ones).cdf->x0.isApprox(d.x));

  VectorXd beta(2);
  beta << 0.9, -0.4;
  double direct = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double s = 2.0 * d.y(i) - 1.0;
    direct += std::log(Phi1(s * d.x.row(i).dot(beta), 1.0));
  }
  CHECK(log_likelihood(lik, beta, cfg) ==
        doctest::Approx(direct).epsilon(1e-9));

  Dataset bad = d;
  bad.y << 0.5, 1.0;
  CHECK_THROWS_AS(build_probit(bad), NonBinaryResponse);
}

TEST_CASE("threshold probit shifts the offset") {
  Dataset d;
  d.x.resize(2, 1);
  d.x << 1.0, 1.0;
  d.y.resize(2);
  d.y << 1.0, 0.0;
  const UnifiedLikelihood zero = build_probit_threshold(d, 0.0);
  const UnifiedLikelihood plain = build_probit(d);
  CHECK(zero.cdf->y0.isApprox(plain.cdf->y0));
  CHECK(zero.cdf->x0.isApprox(plain.cdf->x0));

  const UnifiedLikelihood shifted = build_probit_threshold(d, 2.0);
  CHECK(shifted.cdf->y0(0) == doctest::Approx(-2.0));
  CHECK(shifted.cdf->y0(1) == doctest::Approx(2.0));
}

TEST_CASE("multivariate probit: sign pattern and bivariate likelihood") {
  EngineConfig cfg;
  Dataset d;
  const int m = 2;
  d.y_mat.resize(1, m);
  d.y_mat << 1.0, 0.0;
  d.x.resize(m, 1);
  d.x << 0.7, -0.4;
  MatrixXd sigma(2, 2);
  sigma << 1.0, 0.5, 0.5, 1.5;
  const UnifiedLikelihood lik = build_multivariate_probit(d, sigma);
  REQUIRE(lik.cdf.has_value());
  // B_i = diag(1, -1).
  CHECK(lik.cdf->x0(0, 0) == doctest::Approx(0.7));
  CHECK(lik.cdf->x0(1, 0) == doctest::Approx(0.4));
  MatrixXd expected_sigma(2, 2);
  expected_sigma << 1.0, -0.5, -0.5, 1.5;
  CHECK(lik.cdf->sigma0_blocks[0].isApprox(expected_sigma));

  VectorXd beta = VectorXd::Constant(1, 0.6);
  const VectorXd arg = lik.cdf->y0 + lik.cdf->x0 * beta;
  const double direct =
      std::log(Phi2_quad(arg(0), arg(1), lik.cdf->sigma0_blocks[0]));
  CHECK(log_likelihood(lik, beta, cfg) ==
        doctest::Approx(direct).epsilon(1e-6));

  // m = 1 reduces to plain probit.
  Dataset uni;
  uni.y_mat.resize(2, 1);
  uni.y_mat << 1.0, 0.0;
  uni.x.resize(2, 1);
  uni.x << 0.3, 0.9;
  const UnifiedLikelihood red =
      build_multivariate_probit(uni, MatrixXd::Identity(1, 1));
  Dataset as_probit;
  as_probit.x = uni.x;
  as_probit.y.resize(2);
  as_probit.y << 1.0, 0.0;
  const UnifiedLikelihood plain = build_probit(as_probit);
  CHECK(red.cdf->x0.isApprox(plain.cdf->x0));
}

TEST_CASE("multinomial probit: contrasts, reduction, simplex identity") {
  EngineConfig cfg;
  const int levels = 3;
  MatrixXd sigma = MatrixXd::Identity(levels, levels);
  sigma(0, 1) = sigma(1, 0) = 0.2;

  Dataset d;
  d.x.resize(1, 2);
  d.x << 0.8, -0.3;
  d.y.resize(1);

  // Category probabilities over l = 1..L sum to one at a fixed beta.
  VectorXd beta(4);  // p * (L-1) coefficients
  beta << 0.4, -0.2, 0.1, 0.7;
  double total = 0.0;
  for (int level = 1; level <= levels; ++level) {
    d.y(0) = level;
    const UnifiedLikelihood lik = build_multinomial_probit(d, sigma);
    total += std::exp(log_likelihood(lik, beta, cfg));
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));

  // L = 2 reduces to a probit with contrast-scaled noise.
  MatrixXd sig2(2, 2);
  sig2 << 1.0, 0.3, 0.3, 2.0;
  Dataset d2;
  d2.x.resize(2, 2);
  d2.x << 0.5, 1.0, -0.2, 0.7;
  d2.y.resize(2);
  d2.y << 1.0, 2.0;
  const UnifiedLikelihood lik2 = build_multinomial_probit(d2, sig2);
  const double contrast_var = sig2(0, 0) + sig2(1, 1) - 2.0 * sig2(0, 1);
  CHECK(lik2.cdf->sigma0_blocks[0](0, 0) ==
        doctest::Approx(contrast_var).epsilon(1e-12));
  CHECK(lik2.cdf->x0.row(0).isApprox(d2.x.row(0)));
  CHECK(lik2.cdf->x0.row(1).isApprox(-d2.x.row(1)));

  Dataset bad = d;
  bad.y(0) = 5.0;
  CHECK_THROWS_AS(build_multinomial_probit(bad, sigma),
                  FewerThanTwoCategories);
}

TEST_CASE("tobit builder splits censored and observed rows") {
  EngineConfig cfg;
  Dataset d;
  d.x.resize(3, 2);
  d.x << 1.0, 0.3, 1.0, -0.5, 1.0, 0.9;
  d.y.resize(3);
  d.y << 1.2, 0.0, 0.0;
  const UnifiedLikelihood lik = build_tobit(d, 0.8);
  REQUIRE(lik.gauss.has_value());
  REQUIRE(lik.cdf.has_value());
  CHECK(lik.gauss->y1.size() == 1);
  CHECK(lik.gauss->x1.row(0).isApprox(d.x.row(0)));
  CHECK(lik.cdf->x0.row(0).isApprox(-d.x.row(1)));
  CHECK(lik.cdf->x0.row(1).isApprox(-d.x.row(2)));
  CHECK(lik.cdf->sigma0_blocks[0](0, 0) == doctest::Approx(0.8));

  VectorXd beta(2);
  beta << 0.4, 0.2;
  double direct = std::log(phi1(d.y(0) - d.x.row(0).dot(beta), 0.8));
  for (int i : {1, 2})
    direct += std::log(Phi1(-d.x.row(i).dot(beta), 0.8));
  CHECK(log_likelihood(lik, beta, cfg) ==
        doctest::Approx(direct).epsilon(1e-9));

  // All censored / none censored limits.
  Dataset none = d;
  none.y << 1.0, 2.0, 0.5;
  CHECK(!build_tobit(none, 1.0).cdf.has_value());
  Dataset all = d;
  all.y.setZero();
  CHECK(!build_tobit(all, 1.0).gauss.has_value());

  Dataset neg = d;
  neg.y(0) = -0.1;
  CHECK_THROWS_AS(build_tobit(neg, 1.0), NegativeResponse);
}

TEST_CASE("skew-normal linear: mapping and alpha -> 0 reduction") {
  EngineConfig cfg;
  Dataset d = small_regression();
  const double alpha = 1.4, sigma2 = 0.9;
  const UnifiedLikelihood lik = build_sn_linear(d, sigma2, alpha);
  REQUIRE(lik.gauss.has_value());
  REQUIRE(lik.cdf.has_value());
  CHECK(lik.cdf->y0.isApprox(alpha * d.y));
  CHECK(lik.cdf->x0.isApprox(-alpha * d.x));
  CHECK(lik.log_c == doctest::Approx(3.0 * std::log(2.0)));

  // Per-unit density equals the scalar skew-normal density.
  VectorXd beta(2);
  beta << 0.3, 0.5;
  double direct = 0.0;
  for (int i = 0; i < 3; ++i)
    direct += std::log(sn_pdf(d.y(i), d.x.row(i).dot(beta), sigma2, alpha));
  CHECK(log_likelihood(lik, beta, cfg) ==
        doctest::Approx(direct).epsilon(1e-8));

  // alpha -> 0 recovers the symmetric likelihood pointwise.
  const UnifiedLikelihood sym = build_linear(d, sigma2);
  const UnifiedLikelihood nearly = build_sn_linear(d, sigma2, 1e-9);
  CHECK(log_likelihood(nearly, beta, cfg) ==
        doctest::Approx(log_likelihood(sym, beta, cfg)).epsilon(1e-6));
}

TEST_CASE("skew-normal probit: block structure and class probability") {
  EngineConfig cfg;
  Dataset d;
  d.x.resize(1, 1);
  d.x << 0.9;
  d.y.resize(1);
  d.y << 1.0;
  const double sigma2 = 1.0, alpha = 1.2;
  const UnifiedLikelihood lik = build_sn_probit(d, sigma2, alpha);
  REQUIRE(lik.cdf.has_value());
  CHECK(lik.cdf->partition == std::vector<int>(1, 2));
  const double lam = std::sqrt(sigma2) * alpha / std::sqrt(1.0 + alpha * alpha);
  CHECK(lik.cdf->sigma0_blocks[0](0, 1) == doctest::Approx(lam));
  CHECK(lik.cdf->x0(0, 0) == doctest::Approx(0.9));
  CHECK(lik.cdf->x0(1, 0) == doctest::Approx(0.0));

  // Class probability from the likelihood matches quadrature of the
  // latent skew-normal utility.
  VectorXd beta = VectorXd::Constant(1, 0.6);
  const double p1 = oracle::integrate(
      [&](double z) { return sn_pdf(z, 0.9 * 0.6, sigma2, alpha); }, 0.0,
      20.0, 1e-11);
  CHECK(std::exp(log_likelihood(lik, beta, cfg)) ==
        doctest::Approx(p1).epsilon(1e-6));

  // Both outcomes sum to one.
  Dataset d0 = d;
  d0.y << 0.0;
  const UnifiedLikelihood lik0 = build_sn_probit(d0, sigma2, alpha);
  CHECK(std::exp(log_likelihood(lik, beta, cfg)) +
            std::exp(log_likelihood(lik0, beta, cfg)) ==
        doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("skew-normal tobit: layout and quadrature check") {
  EngineConfig cfg;
  Dataset d;
  d.x.resize(2, 1);
  d.x << 0.8, -0.6;
  d.y.resize(2);
  d.y << 1.1, 0.0;
  const double sigma2 = 1.0, alpha = 0.9;
  const UnifiedLikelihood lik = build_sn_tobit(d, sigma2, alpha);
  REQUIRE(lik.gauss.has_value());
  REQUIRE(lik.cdf.has_value());
  CHECK(lik.cdf->rows() == 3);  // n1 + 2 n0
  CHECK(lik.cdf->partition == std::vector<int>({1, 2}));
  CHECK(lik.cdf->sigma0_blocks[0](0, 0) == doctest::Approx(sigma2));
  const double lam = std::sqrt(sigma2) * alpha / std::sqrt(1.0 + alpha * alpha);
  CHECK(lik.cdf->sigma0_blocks[1](0, 1) == doctest::Approx(-lam));

  VectorXd beta = VectorXd::Constant(1, 0.5);
  const double m1 = 0.8 * 0.5;
  const double m2 = -0.6 * 0.5;
  const double obs = sn_pdf(1.1, m1, sigma2, alpha);
  const double cens = oracle::integrate(
      [&](double z) { return sn_pdf(z, m2, sigma2, alpha); }, -20.0, 0.0,
      1e-11);
  CHECK(log_likelihood(lik, beta, cfg) ==
        doctest::Approx(std::log(obs) + std::log(cens)).epsilon(1e-6));

  // alpha -> 0 recovers the tobit likelihood pointwise.
  const UnifiedLikelihood sym = build_tobit(d, sigma2);
  const UnifiedLikelihood nearly = build_sn_tobit(d, sigma2, 1e-9);
  CHECK(log_likelihood(nearly, beta, cfg) ==
        doctest::Approx(log_likelihood(sym, beta, cfg)).epsilon(1e-6));
}

TEST_CASE("gp builder wires the identity design") {
  Dataset d;
  d.x.resize(3, 1);
  d.x << 0.1, 0.5, 0.9;
  d.y.resize(3);
  d.y << 0.2, 0.6, 0.3;
  MatrixXd kernel(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      kernel(i, j) = std::exp(-10.0 * std::pow(d.x(i, 0) - d.x(j, 0), 2));
  kernel += 1e-8 * MatrixXd::Identity(3, 3);
  const auto [lik, prior] =
      build_gp(kernel, VectorXd::Zero(3), d, GpKind::linear, 0.4);
  CHECK(lik.gauss->x1.isApprox(MatrixXd::Identity(3, 3)));
  CHECK(prior.gaussian());
  CHECK(prior.omega.isApprox(kernel));
}

TEST_CASE("concatenation: identity, assembly, mixed dims") {
  EngineConfig cfg;
  Dataset d = small_regression();
  const UnifiedLikelihood lin = build_linear(d, 1.0);
  const UnifiedLikelihood same = concat_likelihoods({lin});
  CHECK(log_likelihood(same, VectorXd::Zero(2), cfg) ==
        doctest::Approx(log_likelihood(lin, VectorXd::Zero(2), cfg)));

  Dataset db;
  db.x.resize(2, 2);
  db.x << 0.2, -0.1, 0.6, 0.4;
  db.y.resize(2);
  db.y << 1.0, 0.0;
  const UnifiedLikelihood pro = build_probit(db);
  const UnifiedLikelihood both = concat_likelihoods({lin, pro});
  REQUIRE(both.gauss.has_value());
  REQUIRE(both.cdf.has_value());
  CHECK(both.cdf->rows() == 2);
  VectorXd beta(2);
  beta << -0.3, 0.8;
  CHECK(log_likelihood(both, beta, cfg) ==
        doctest::Approx(log_likelihood(lin, beta, cfg) +
                        log_likelihood(pro, beta, cfg))
            .epsilon(1e-10));

  Dataset other;
  other.x.resize(2, 3);
  other.x.setOnes();
  other.y.resize(2);
  other.y << 1.0, 0.0;
  const UnifiedLikelihood wide = build_probit(other);
  CHECK_THROWS_AS(concat_likelihoods({lin, wide}), MixedDimensions);
}
