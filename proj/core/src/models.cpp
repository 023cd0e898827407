#include "sunbayes/models.hpp"

#include <cmath>
#include <numeric>

#include "sunbayes/errors.hpp"

namespace sunbayes {

namespace {

void require_binary(const VectorXd& y, const std::string& who) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 0.0 && y(i) != 1.0)
      throw NonBinaryResponse(who + ": responses must be 0/1");
}

double sign_pm1(double y) { return 2.0 * y - 1.0; }

}  // namespace

int UnifiedLikelihood::dim() const {
  if (gauss) return static_cast<int>(gauss->x1.cols());
  if (cdf) return static_cast<int>(cdf->x0.cols());
  return 0;
}

void UnifiedLikelihood::check() const {
  if (!gauss && !cdf)
    throw DimensionMismatch("UnifiedLikelihood: at least one block required");
  if (gauss) {
    const int n1 = static_cast<int>(gauss->y1.size());
    if (gauss->x1.rows() != n1 || gauss->sigma1.rows() != n1 ||
        gauss->sigma1.cols() != n1)
      throw DimensionMismatch("UnifiedLikelihood: gauss block shapes");
  }
  if (cdf) {
    const int n0 = cdf->rows();
    if (cdf->x0.rows() != n0)
      throw DimensionMismatch("UnifiedLikelihood: cdf design rows");
    int total = 0;
    for (std::size_t b = 0; b < cdf->partition.size(); ++b) {
      const int k = cdf->partition[b];
      if (k <= 0) throw DimensionMismatch("UnifiedLikelihood: partition entry");
      if (cdf->sigma0_blocks[b].rows() != k ||
          cdf->sigma0_blocks[b].cols() != k)
        throw DimensionMismatch(
            "UnifiedLikelihood: sigma0 block does not match partition");
      total += k;
    }
    if (cdf->sigma0_blocks.size() != cdf->partition.size() || total != n0)
      throw DimensionMismatch("UnifiedLikelihood: partition does not cover n0");
  }
  if (gauss && cdf && gauss->x1.cols() != cdf->x0.cols())
    throw DimensionMismatch("UnifiedLikelihood: mixed coefficient dims");
}

UnifiedLikelihood build_linear(const Dataset& data, double sigma2) {
  if (sigma2 <= 0) throw NonPositiveVariance("build_linear: sigma2 <= 0");
  UnifiedLikelihood lik;
  lik.gauss = GaussBlock{
      data.y, data.x,
      sigma2 * MatrixXd::Identity(data.n(), data.n())};
  lik.check();
  return lik;
}

UnifiedLikelihood build_linear_mv(const Dataset& data, const MatrixXd& sigma) {
  const int m = static_cast<int>(sigma.rows());
  if (m == 0 || sigma.cols() != m)
    throw SigmaDimMismatch("build_linear_mv: sigma must be square");
  const int n = static_cast<int>(data.y_mat.rows());
  if (data.y_mat.cols() != m)
    throw SigmaDimMismatch("build_linear_mv: y_mat columns != sigma dim");
  if (data.x.rows() != static_cast<Eigen::Index>(n) * m)
    throw DimensionMismatch("build_linear_mv: x must stack n blocks of m rows");
  UnifiedLikelihood lik;
  GaussBlock g;
  g.y1.resize(n * m);
  for (int i = 0; i < n; ++i)
    g.y1.segment(i * m, m) = data.y_mat.row(i).transpose();
  g.x1 = data.x;
  g.sigma1 = MatrixXd::Zero(n * m, n * m);
  for (int i = 0; i < n; ++i) g.sigma1.block(i * m, i * m, m, m) = sigma;
  lik.gauss = std::move(g);
  lik.check();
  return lik;
}

UnifiedLikelihood build_probit(const Dataset& data) {
  return build_probit_threshold(data, 0.0);
}

UnifiedLikelihood build_probit_threshold(const Dataset& data, double z_t) {
  require_binary(data.y, "build_probit");
  const int n = data.n();
  UnifiedLikelihood lik;
  CdfBlock c;
  c.y0.resize(n);
  c.x0.resize(n, data.p());
  for (int i = 0; i < n; ++i) {
    const double s = sign_pm1(data.y(i));
    c.y0(i) = -z_t * s;
    c.x0.row(i) = s * data.x.row(i);
  }
  c.sigma0_blocks.assign(n, MatrixXd::Identity(1, 1));
  c.partition.assign(n, 1);
  lik.cdf = std::move(c);
  lik.check();
  return lik;
}

UnifiedLikelihood build_multivariate_probit(const Dataset& data,
                                            const MatrixXd& sigma) {
  const int m = static_cast<int>(sigma.rows());
  if (m == 0 || sigma.cols() != m)
    throw SigmaDimMismatch("build_multivariate_probit: sigma must be square");
  const int n = static_cast<int>(data.y_mat.rows());
  if (data.y_mat.cols() != m)
    throw SigmaDimMismatch("build_multivariate_probit: y_mat cols != m");
  if (data.x.rows() != static_cast<Eigen::Index>(n) * m)
    throw DimensionMismatch(
        "build_multivariate_probit: x must stack n blocks of m rows");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      if (data.y_mat(i, j) != 0.0 && data.y_mat(i, j) != 1.0)
        throw NonBinaryResponse("build_multivariate_probit: responses 0/1");

  UnifiedLikelihood lik;
  CdfBlock c;
  c.y0 = VectorXd::Zero(n * m);
  c.x0.resize(n * m, data.p());
  c.sigma0_blocks.reserve(n);
  c.partition.assign(n, m);
  for (int i = 0; i < n; ++i) {
    VectorXd signs(m);
    for (int j = 0; j < m; ++j) signs(j) = sign_pm1(data.y_mat(i, j));
    c.x0.middleRows(i * m, m) =
        signs.asDiagonal() * data.x.middleRows(i * m, m);
    c.sigma0_blocks.push_back(signs.asDiagonal() * sigma * signs.asDiagonal());
  }
  lik.cdf = std::move(c);
  lik.check();
  return lik;
}

UnifiedLikelihood build_multinomial_probit(const Dataset& data,
                                           const MatrixXd& sigma) {
  const int levels = static_cast<int>(sigma.rows());
  if (levels < 2)
    throw FewerThanTwoCategories("build_multinomial_probit: need L >= 2");
  if (sigma.cols() != levels)
    throw SigmaDimMismatch("build_multinomial_probit: sigma must be L x L");
  const int n = data.n();
  const int p = data.p();
  for (int i = 0; i < n; ++i) {
    const double yi = data.y(i);
    if (yi < 1 || yi > levels || yi != std::floor(yi))
      throw FewerThanTwoCategories(
          "build_multinomial_probit: categories must lie in 1..L");
  }
  const int rows_per_unit = levels - 1;
  const int pbar = p * rows_per_unit;

  UnifiedLikelihood lik;
  CdfBlock c;
  c.y0 = VectorXd::Zero(n * rows_per_unit);
  c.x0 = MatrixXd::Zero(n * rows_per_unit, pbar);
  c.partition.assign(n, rows_per_unit);
  c.sigma0_blocks.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int yi = static_cast<int>(data.y(i));
    MatrixXd contrasts(rows_per_unit, levels);  // rows (v_k - v_l)^T, k != yi
    int r = 0;
    for (int k = 1; k <= levels; ++k) {
      if (k == yi) continue;
      VectorXd row = VectorXd::Zero(levels);
      row(k - 1) = 1.0;
      row(yi - 1) -= 1.0;
      contrasts.row(r) = row.transpose();
      // Design row: (x_{i,yi} - x_{i,k})^T with x_{il} = vbar_l (x) x_i and
      // the last category's coefficients pinned at zero.
      if (yi < levels)
        c.x0.block(i * rows_per_unit + r, (yi - 1) * p, 1, p) = data.x.row(i);
      if (k < levels)
        c.x0.block(i * rows_per_unit + r, (k - 1) * p, 1, p) -= data.x.row(i);
      ++r;
    }
    c.sigma0_blocks.push_back(contrasts * sigma * contrasts.transpose());
  }
  lik.cdf = std::move(c);
  lik.check();
  return lik;
}

UnifiedLikelihood build_tobit(const Dataset& data, double sigma2) {
  if (sigma2 <= 0) throw NonPositiveVariance("build_tobit: sigma2 <= 0");
  const int n = data.n();
  for (int i = 0; i < n; ++i)
    if (data.y(i) < 0)
      throw NegativeResponse("build_tobit: responses must be >= 0");
  std::vector<int> observed, censored;
  for (int i = 0; i < n; ++i)
    (data.y(i) > 0 ? observed : censored).push_back(i);

  UnifiedLikelihood lik;
  if (!observed.empty()) {
    GaussBlock g;
    const int n1 = static_cast<int>(observed.size());
    g.y1.resize(n1);
    g.x1.resize(n1, data.p());
    for (int r = 0; r < n1; ++r) {
      g.y1(r) = data.y(observed[r]);
      g.x1.row(r) = data.x.row(observed[r]);
    }
    g.sigma1 = sigma2 * MatrixXd::Identity(n1, n1);
    lik.gauss = std::move(g);
  }
  if (!censored.empty()) {
    CdfBlock c;
    const int n0 = static_cast<int>(censored.size());
    c.y0 = VectorXd::Zero(n0);
    c.x0.resize(n0, data.p());
    for (int r = 0; r < n0; ++r) c.x0.row(r) = -data.x.row(censored[r]);
    c.sigma0_blocks.assign(n0, sigma2 * MatrixXd::Identity(1, 1));
    c.partition.assign(n0, 1);
    lik.cdf = std::move(c);
  }
  lik.check();
  return lik;
}

UnifiedLikelihood build_sn_linear(const Dataset& data, double sigma2,
                                  double alpha) {
  if (sigma2 <= 0) throw NonPositiveVariance("build_sn_linear: sigma2 <= 0");
  const int n = data.n();
  UnifiedLikelihood lik;
  lik.gauss = GaussBlock{data.y, data.x,
                         sigma2 * MatrixXd::Identity(n, n)};
  CdfBlock c;
  c.y0 = alpha * data.y;
  c.x0 = -alpha * data.x;
  c.sigma0_blocks.assign(n, sigma2 * MatrixXd::Identity(1, 1));
  c.partition.assign(n, 1);
  lik.cdf = std::move(c);
  lik.log_c = n * std::log(2.0);
  lik.check();
  return lik;
}

UnifiedLikelihood build_sn_probit(const Dataset& data, double sigma2,
                                  double alpha) {
  if (sigma2 <= 0) throw NonPositiveVariance("build_sn_probit: sigma2 <= 0");
  require_binary(data.y, "build_sn_probit");
  const int n = data.n();
  const double sigma = std::sqrt(sigma2);
  const double lam = sigma * alpha / std::sqrt(1.0 + alpha * alpha);
  MatrixXd base(2, 2);
  base << sigma2, 0.0, 0.0, 1.0;
  MatrixXd couple(2, 2);
  couple << 0.0, lam, lam, 0.0;

  UnifiedLikelihood lik;
  CdfBlock c;
  c.y0 = VectorXd::Zero(2 * n);
  c.x0 = MatrixXd::Zero(2 * n, data.p());
  c.partition.assign(n, 2);
  c.sigma0_blocks.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double s = sign_pm1(data.y(i));
    c.x0.row(2 * i) = s * data.x.row(i);
    c.sigma0_blocks.push_back(base + s * couple);
  }
  lik.cdf = std::move(c);
  lik.log_c = n * std::log(2.0);
  lik.check();
  return lik;
}

UnifiedLikelihood build_sn_tobit(const Dataset& data, double sigma2,
                                 double alpha) {
  if (sigma2 <= 0) throw NonPositiveVariance("build_sn_tobit: sigma2 <= 0");
  const int n = data.n();
  for (int i = 0; i < n; ++i)
    if (data.y(i) < 0)
      throw NegativeResponse("build_sn_tobit: responses must be >= 0");
  std::vector<int> observed, censored;
  for (int i = 0; i < n; ++i)
    (data.y(i) > 0 ? observed : censored).push_back(i);
  const int n1 = static_cast<int>(observed.size());
  const int n0 = static_cast<int>(censored.size());

  const double sigma = std::sqrt(sigma2);
  const double lam = sigma * alpha / std::sqrt(1.0 + alpha * alpha);
  MatrixXd censored_cov(2, 2);  // Sigma - Lambda
  censored_cov << sigma2, -lam, -lam, 1.0;

  UnifiedLikelihood lik;
  if (n1 > 0) {
    GaussBlock g;
    g.y1.resize(n1);
    g.x1.resize(n1, data.p());
    for (int r = 0; r < n1; ++r) {
      g.y1(r) = data.y(observed[r]);
      g.x1.row(r) = data.x.row(observed[r]);
    }
    g.sigma1 = sigma2 * MatrixXd::Identity(n1, n1);
    lik.gauss = std::move(g);
  }
  CdfBlock c;
  c.y0 = VectorXd::Zero(n1 + 2 * n0);
  c.x0 = MatrixXd::Zero(n1 + 2 * n0, data.p());
  for (int r = 0; r < n1; ++r) {
    c.y0(r) = alpha * data.y(observed[r]);
    c.x0.row(r) = -alpha * data.x.row(observed[r]);
  }
  for (int r = 0; r < n0; ++r)
    c.x0.row(n1 + 2 * r) = -data.x.row(censored[r]);
  c.partition.assign(n1, 1);
  c.sigma0_blocks.assign(n1, sigma2 * MatrixXd::Identity(1, 1));
  for (int r = 0; r < n0; ++r) {
    c.partition.push_back(2);
    c.sigma0_blocks.push_back(censored_cov);
  }
  if (c.rows() > 0) lik.cdf = std::move(c);
  lik.log_c = n * std::log(2.0);
  lik.check();
  return lik;
}

std::pair<UnifiedLikelihood, SunParams> build_gp(const MatrixXd& kernel,
                                                 const VectorXd& mean_fn,
                                                 const Dataset& data,
                                                 GpKind kind, double sigma2) {
  const int n = data.n();
  if (kernel.rows() != n || kernel.cols() != n || mean_fn.size() != n)
    throw DimensionMismatch("build_gp: kernel/mean must match n");
  require_symmetric(kernel, 1e-10, "build_gp");
  chol_jittered(kernel, JitterOptions{}, "build_gp: kernel");
  Dataset identity_design;
  identity_design.x = MatrixXd::Identity(n, n);
  identity_design.y = data.y;
  UnifiedLikelihood lik;
  switch (kind) {
    case GpKind::linear:
      lik = build_linear(identity_design, sigma2);
      break;
    case GpKind::probit:
      lik = build_probit(identity_design);
      break;
  }
  return {lik, SunParams::gaussian_prior(mean_fn, kernel)};
}

UnifiedLikelihood concat_likelihoods(
    const std::vector<UnifiedLikelihood>& parts) {
  if (parts.empty())
    throw MixedDimensions("concat_likelihoods: no parts");
  const int p = parts.front().dim();
  for (const auto& part : parts)
    if (part.dim() != p)
      throw MixedDimensions("concat_likelihoods: coefficient dims differ");
  if (parts.size() == 1) return parts.front();

  UnifiedLikelihood out;
  out.log_c = 0.0;
  int n1 = 0, n0 = 0;
  for (const auto& part : parts) {
    out.log_c += part.log_c;
    if (part.gauss) n1 += static_cast<int>(part.gauss->y1.size());
    if (part.cdf) n0 += part.cdf->rows();
  }
  if (n1 > 0) {
    GaussBlock g;
    g.y1.resize(n1);
    g.x1.resize(n1, p);
    g.sigma1 = MatrixXd::Zero(n1, n1);
    int at = 0;
    for (const auto& part : parts) {
      if (!part.gauss) continue;
      const int k = static_cast<int>(part.gauss->y1.size());
      g.y1.segment(at, k) = part.gauss->y1;
      g.x1.middleRows(at, k) = part.gauss->x1;
      g.sigma1.block(at, at, k, k) = part.gauss->sigma1;
      at += k;
    }
    out.gauss = std::move(g);
  }
  if (n0 > 0) {
    CdfBlock c;
    c.y0.resize(n0);
    c.x0.resize(n0, p);
    int at = 0;
    for (const auto& part : parts) {
      if (!part.cdf) continue;
      const int k = part.cdf->rows();
      c.y0.segment(at, k) = part.cdf->y0;
      c.x0.middleRows(at, k) = part.cdf->x0;
      for (const auto& blk : part.cdf->sigma0_blocks)
        c.sigma0_blocks.push_back(blk);
      for (int s : part.cdf->partition) c.partition.push_back(s);
      at += k;
    }
    out.cdf = std::move(c);
  }
  out.check();
  return out;
}

double log_likelihood(const UnifiedLikelihood& lik, const VectorXd& beta,
                      const EngineConfig& cfg) {
  lik.check();
  if (beta.size() != lik.dim())
    throw DimensionMismatch("log_likelihood: beta length");
  double acc = lik.log_c;
  if (lik.gauss) {
    acc += log_mvn_pdf(lik.gauss->y1, lik.gauss->x1 * beta, lik.gauss->sigma1,
                       cfg.jitter);
  }
  if (lik.cdf) {
    const VectorXd arg = lik.cdf->y0 + lik.cdf->x0 * beta;
    int at = 0;
    for (std::size_t b = 0; b < lik.cdf->partition.size(); ++b) {
      const int k = lik.cdf->partition[b];
      acc += mvn_cdf_shifted(arg.segment(at, k), VectorXd::Zero(k),
                             lik.cdf->sigma0_blocks[b], cfg.mvn.accuracy, cfg)
                 .log_value;
      at += k;
    }
  }
  return acc;
}

}  // namespace sunbayes
