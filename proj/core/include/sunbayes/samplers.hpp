#pragma once

#include <cstdint>

#include "sunbayes/conjugate.hpp"

namespace sunbayes {

enum class ChainMethod { gibbs, iid };

struct ChainOutput {
  MatrixXd draws;             // n_iter x p, post burn-in for gibbs
  MatrixXd z_draws;           // optional, n_iter x latent dim (may be 0 x 0)
  std::uint64_t seed = 0;
  int burn_in = 0;
  ChainMethod method = ChainMethod::iid;
  bool exact = true;          // false when any TN block used the fallback
  double acceptance = 1.0;    // accept-reject rate of the latent draw
};

struct GibbsOptions {
  int burn_in = 500;
  bool keep_z = false;
};

// Data-augmentation chain alternating the Gaussian coefficient draw with
// blockwise truncated-normal latent draws.
ChainOutput gibbs(const PosteriorBundle& bundle, std::size_t n_iter,
                  RngStream& rng, const GibbsOptions& opts = {},
                  const EngineConfig& cfg = {});

enum class IidRoute { automatic, marginal_latent, additive };

// Independent draws: either marginalize the coefficients and sample the
// latent truncated normal jointly, or use the additive representation of
// the posterior; the two routes agree in distribution.
ChainOutput iid(const PosteriorBundle& bundle, std::size_t n,
                RngStream& rng, IidRoute route = IidRoute::automatic,
                const EngineConfig& cfg = {});

// Effective sample size via initial positive sequence of autocorrelations.
double effective_sample_size(const VectorXd& series);

}  // namespace sunbayes
