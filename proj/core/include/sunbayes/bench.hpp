#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sunbayes/approx.hpp"
#include "sunbayes/samplers.hpp"

namespace sunbayes {

struct BenchConfig {
  int n = 200;
  std::vector<double> kappa_list = {0.15, 0.50, 0.85};
  std::vector<int> p_list = {10, 20, 50, 100, 200, 400, 800};
  // Spherical prior variance rule: 25 * 10 / p.
  double prior_var_numerator = 25.0 * 10.0;
  int n_mc = 5000;
  int n_test = 200;
  std::uint64_t seed = 20260808ULL;
  int threads = 0;  // 0 = hardware concurrency
  double vb_tol = 1e-6;
  int vb_max_iter = 2000;
  double ep_tol = 1e-6;
  int ep_max_iter = 200;
};

struct BenchRow {
  double kappa = 0.0;
  int p = 0;
  std::string method;      // mf | pfm | ep
  std::string functional;  // post_mean | post_var | pred_response | pred_censor
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  int n_iter = 0;
  double wall_time_s = 0.0;
  std::string status = "ok";
};

struct CellSummary {
  double kappa = 0.0;
  int p = 0;
  bool ok = true;
  std::string error;
  bool reference_exact = true;
  double reference_seconds = 0.0;
  double reference_acceptance = 1.0;
  // Median (over elements) of 0.6745 * standard error of the Monte Carlo
  // reference, per functional: the noise level an exact method would show.
  std::map<std::string, double> mc_floor;
  std::map<std::string, int> n_iter;
  std::map<std::string, bool> converged;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<CellSummary> cells;
  bool all_ok = true;
};

struct ScalingRow {
  int p = 0;
  std::string method;
  double per_iter_seconds = 0.0;
};

// Tobit design: standard-normal predictors behind an intercept, uniform
// coefficients on [-5, 5], unit noise, censoring threshold at the empirical
// kappa-quantile of the latent draws (folded into the intercept so the
// stored response is censored at zero), predictors standardized to mean 0
// and sd 0.5 afterwards.
std::pair<Dataset, VectorXd> simulate(const BenchConfig& config, double kappa,
                                      int p, RngStream& rng);

BenchResult run_bench(const BenchConfig& config, const EngineConfig& cfg = {});

std::vector<ScalingRow> run_scaling(const BenchConfig& config,
                                    const EngineConfig& cfg = {});

// File emission: bench.csv, scaling.csv, summary.json under out_dir.
void write_bench_csv(const std::string& path,
                     const std::vector<BenchRow>& rows);
void write_scaling_csv(const std::string& path,
                       const std::vector<ScalingRow>& rows);
void write_summary_json(const std::string& path, const BenchResult& result);

// Type-7 quantile with linear interpolation.
double quantile_type7(std::vector<double> values, double prob);

}  // namespace sunbayes
