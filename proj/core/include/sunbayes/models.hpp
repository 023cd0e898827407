#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "sunbayes/linalg.hpp"
#include "sunbayes/sun.hpp"

namespace sunbayes {

// Gaussian-density part: y1 - X1 * beta ~ N(0, sigma1).
struct GaussBlock {
  VectorXd y1;
  MatrixXd x1;
  MatrixXd sigma1;
};

// Gaussian-CDF part: the likelihood factor Phi(y0 + X0 * beta; sigma0) with
// sigma0 block-diagonal along `partition`. Blocks are stored directly.
struct CdfBlock {
  VectorXd y0;
  MatrixXd x0;
  std::vector<MatrixXd> sigma0_blocks;
  std::vector<int> partition;

  int rows() const { return static_cast<int>(y0.size()); }
  MatrixXd sigma0_dense() const { return block_diag(sigma0_blocks); }
};

struct UnifiedLikelihood {
  std::optional<GaussBlock> gauss;
  std::optional<CdfBlock> cdf;
  double log_c = 0.0;  // known proportionality constant, log scale

  int dim() const;  // p: coefficient dimension
  void check() const;
};

// Observed data. `y` holds reals, 0/1 indicators, 1..L categories, or a
// censored-at-zero response depending on the builder; multivariate
// responses use `y_mat` (n x m) with the stacked design in `x` (n*m x p).
struct Dataset {
  MatrixXd x;
  VectorXd y;
  MatrixXd y_mat;

  int n() const { return static_cast<int>(x.rows()); }
  int p() const { return static_cast<int>(x.cols()); }
};

UnifiedLikelihood build_linear(const Dataset& data, double sigma2);
// Multivariate responses, noise I_n (x) sigma.
UnifiedLikelihood build_linear_mv(const Dataset& data, const MatrixXd& sigma);

UnifiedLikelihood build_probit(const Dataset& data);
UnifiedLikelihood build_probit_threshold(const Dataset& data, double z_t);
UnifiedLikelihood build_multivariate_probit(const Dataset& data,
                                            const MatrixXd& sigma);
// Categories 1..L; coefficients are stacked per non-reference category, so
// the coefficient dimension is p*(L-1).
UnifiedLikelihood build_multinomial_probit(const Dataset& data,
                                           const MatrixXd& sigma);

UnifiedLikelihood build_tobit(const Dataset& data, double sigma2);

UnifiedLikelihood build_sn_linear(const Dataset& data, double sigma2,
                                  double alpha);
UnifiedLikelihood build_sn_probit(const Dataset& data, double sigma2,
                                  double alpha);
UnifiedLikelihood build_sn_tobit(const Dataset& data, double sigma2,
                                 double alpha);

enum class GpKind { linear, probit };

// Function-space regression on an identity design: returns the likelihood
// plus the Gaussian prior given by the kernel matrix and mean vector.
std::pair<UnifiedLikelihood, SunParams> build_gp(const MatrixXd& kernel,
                                                 const VectorXd& mean_fn,
                                                 const Dataset& data,
                                                 GpKind kind,
                                                 double sigma2 = 1.0);

UnifiedLikelihood concat_likelihoods(
    const std::vector<UnifiedLikelihood>& parts);

// log p(y | beta) including log_c; the CDF part factors over the partition
// blocks and is evaluated block by block.
double log_likelihood(const UnifiedLikelihood& lik, const VectorXd& beta,
                      const EngineConfig& cfg = {});

}  // namespace sunbayes
