#include <benchmark/benchmark.h>

#include "sunbayes/approx.hpp"
#include "sunbayes/bench.hpp"
#include "sunbayes/mvn.hpp"

namespace {

using namespace sunbayes;

MatrixXd ar1_corr(int n, double rho) {
  MatrixXd c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c(i, j) = std::pow(rho, std::abs(i - j));
  return c;
}

void BM_MvnCdf(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  EngineConfig cfg;
  const MatrixXd corr = ar1_corr(n, 0.5);
  const VectorXd upper = VectorXd::Zero(n);
  for (auto _ : state) {
    auto r = mvn_cdf(upper, corr, 1e-4, cfg);
    benchmark::DoNotOptimize(r.value);
  }
}
BENCHMARK(BM_MvnCdf)->Arg(4)->Arg(16)->Arg(64);

void BM_TmvnSample(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  EngineConfig cfg;
  TruncNormalSpec spec{VectorXd::Zero(n), VectorXd::Zero(n), ar1_corr(n, 0.4)};
  RngStream rng(7);
  for (auto _ : state) {
    auto s = sample_tmvn(spec, 32, rng, cfg);
    benchmark::DoNotOptimize(s.draws.sum());
  }
}
BENCHMARK(BM_TmvnSample)->Arg(4)->Arg(16)->Arg(64);

struct FixtureCell {
  PosteriorBundle bundle;
};

FixtureCell make_cell(int p) {
  BenchConfig config;
  config.n = 200;
  RngStream rng(11);
  auto [data, truth] = simulate(config, 0.5, p, rng);
  const UnifiedLikelihood lik = build_tobit(data, 1.0);
  const SunParams prior = SunParams::gaussian_prior(
      VectorXd::Zero(p), 250.0 / p * MatrixXd::Identity(p, p));
  return {update(prior, lik)};
}

void BM_PfmSweep(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const FixtureCell cell = make_cell(p);
  EngineConfig cfg;
  for (auto _ : state) {
    auto st = pfm_vb(cell.bundle, VbOptions{0.0, 2}, cfg);
    benchmark::DoNotOptimize(st.beta_mean.sum());
  }
}
BENCHMARK(BM_PfmSweep)->Arg(100)->Arg(400)->Arg(800);

void BM_EpSweep(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const FixtureCell cell = make_cell(p);
  EngineConfig cfg;
  EpOptions opts;
  opts.tol = 0.0;
  opts.max_iter = 2;
  opts.with_evidence = false;
  for (auto _ : state) {
    auto st = ep_scalable(cell.bundle, opts, cfg);
    benchmark::DoNotOptimize(st.mean.sum());
  }
}
BENCHMARK(BM_EpSweep)->Arg(100)->Arg(400)->Arg(800);

}  // namespace

BENCHMARK_MAIN();
