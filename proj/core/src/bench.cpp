#include "sunbayes/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <thread>

#include <json.hpp>

#include "sunbayes/errors.hpp"
#include "sunbayes/normal.hpp"

namespace sunbayes {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

const std::vector<std::string> kFunctionals = {"post_mean", "post_var",
                                               "pred_response", "pred_censor"};

// E[t Phi(t)] and E[Phi(-t)] for t ~ N(mu, var): closed under a Gaussian
// coefficient approximation.
double gauss_pred_response(double mu, double var) {
  const double s = std::sqrt(1.0 + var);
  return mu * norm_cdf(mu / s) + var / s * norm_pdf(mu / s);
}
double gauss_pred_censor(double mu, double var) {
  return norm_cdf(-mu / std::sqrt(1.0 + var));
}

struct FunctionalSet {
  VectorXd post_mean;
  VectorXd post_var;
  VectorXd pred_response;
  VectorXd pred_censor;

  const VectorXd& get(const std::string& name) const {
    if (name == "post_mean") return post_mean;
    if (name == "post_var") return post_var;
    if (name == "pred_response") return pred_response;
    return pred_censor;
  }
};

// Monte Carlo estimates plus per-element standard errors from a draw set.
struct McReference {
  FunctionalSet est;
  FunctionalSet se;
};

McReference mc_reference(const MatrixXd& draws, const MatrixXd& x_test,
                         double ess_scale) {
  const int n = static_cast<int>(draws.rows());
  const int p = static_cast<int>(draws.cols());
  const int nt = static_cast<int>(x_test.rows());
  McReference out;
  out.est.post_mean = draws.colwise().mean();
  out.se.post_mean.resize(p);
  out.est.post_var.resize(p);
  out.se.post_var.resize(p);
  for (int j = 0; j < p; ++j) {
    const VectorXd centered = draws.col(j).array() - out.est.post_mean(j);
    const VectorXd sq = centered.array().square();
    const double var = sq.sum() / (n - 1);
    out.est.post_var(j) = var;
    out.se.post_mean(j) = std::sqrt(var / n) * ess_scale;
    const double var_of_sq =
        (sq.array() - var).square().sum() / (n - 1);
    out.se.post_var(j) = std::sqrt(var_of_sq / n) * ess_scale;
  }
  const MatrixXd t = draws * x_test.transpose();  // n x nt
  out.est.pred_response.resize(nt);
  out.se.pred_response.resize(nt);
  out.est.pred_censor.resize(nt);
  out.se.pred_censor.resize(nt);
  for (int k = 0; k < nt; ++k) {
    VectorXd resp(n), cens(n);
    for (int s = 0; s < n; ++s) {
      const double ts = t(s, k);
      resp(s) = ts * norm_cdf(ts);
      cens(s) = norm_cdf(-ts);
    }
    out.est.pred_response(k) = resp.mean();
    out.est.pred_censor(k) = cens.mean();
    out.se.pred_response(k) =
        std::sqrt((resp.array() - resp.mean()).square().sum() / (n - 1) / n) *
        ess_scale;
    out.se.pred_censor(k) =
        std::sqrt((cens.array() - cens.mean()).square().sum() / (n - 1) / n) *
        ess_scale;
  }
  return out;
}

// Gaussian-approximation functionals from mean and a test-point variance
// vector.
FunctionalSet gaussian_functionals(const VectorXd& mean,
                                   const VectorXd& cov_diag,
                                   const VectorXd& t_mean,
                                   const VectorXd& t_var) {
  FunctionalSet out;
  out.post_mean = mean;
  out.post_var = cov_diag;
  const int nt = static_cast<int>(t_mean.size());
  out.pred_response.resize(nt);
  out.pred_censor.resize(nt);
  for (int k = 0; k < nt; ++k) {
    out.pred_response(k) = gauss_pred_response(t_mean(k), t_var(k));
    out.pred_censor(k) = gauss_pred_censor(t_mean(k), t_var(k));
  }
  return out;
}

// Quadratic forms x^T Omega_ep x for the scalable EP representation
// Omega_ep = (Omega_post^{-1} + X^T Ktilde X)^{-1}.
VectorXd ep_test_variances(const PosteriorBundle& bundle, const EpState& state,
                           const MatrixXd& x_test, const EngineConfig& cfg) {
  const int qn = bundle.latent_dim();
  const int nt = static_cast<int>(x_test.rows());
  const MatrixXd base = x_test * bundle.posterior.omega;  // nt x p
  VectorXd out(nt);
  if (qn == 0) {
    for (int k = 0; k < nt; ++k) out(k) = base.row(k).dot(x_test.row(k));
    return out;
  }
  MatrixXd ktilde = MatrixXd::Zero(qn, qn);
  const std::vector<int> offs = block_offsets(bundle.partition);
  for (std::size_t c = 0; c < bundle.partition.size(); ++c) {
    const int at = offs[c];
    const int k = bundle.partition[c];
    ktilde.block(at, at, k, k) = state.sites[c].k_mat;
  }
  const MatrixXd w0 =
      bundle.x_post * bundle.posterior.omega * bundle.x_post.transpose();
  const MatrixXd t_mat =
      ktilde * (MatrixXd::Identity(qn, qn) + w0 * ktilde).partialPivLu()
                   .inverse();
  const MatrixXd proj = bundle.x_post * base.transpose();  // qn x nt
  const MatrixXd corr = t_mat * proj;
  for (int k = 0; k < nt; ++k)
    out(k) = base.row(k).dot(x_test.row(k)) - proj.col(k).dot(corr.col(k));
  (void)cfg;
  return out;
}

// PFM predictive functionals by sampling the projected test responses.
FunctionalSet pfm_functionals(const PosteriorBundle& bundle,
                              const VbState& state, const MatrixXd& x_test,
                              int n_draws, RngStream rng,
                              const EngineConfig& cfg) {
  FunctionalSet out;
  out.post_mean = state.beta_mean;
  out.post_var = state.beta_cov.diagonal();
  const int nt = static_cast<int>(x_test.rows());
  const int qn = bundle.latent_dim();
  const std::vector<int> offs = block_offsets(bundle.partition);

  // t | z is Gaussian with mean A (z - eta) + t0 and covariance T_cov.
  const MatrixXd half = bundle.v_post * bundle.x_post.transpose();  // p x qn
  MatrixXd a_mat(nt, qn);
  {
    MatrixXd sinv_half = half.transpose();  // qn x p, becomes Sigma^{-1}-scaled
    for (std::size_t c = 0; c < bundle.partition.size(); ++c) {
      const int at = offs[c];
      const int k = bundle.partition[c];
      const CholResult ch =
          chol_jittered(bundle.sigma_post_blocks[c], cfg.jitter, "bench: pfm");
      MatrixXd rows = sinv_half.middleRows(at, k);
      ch.lower.triangularView<Eigen::Lower>().solveInPlace(rows);
      ch.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(rows);
      sinv_half.middleRows(at, k) = rows;
    }
    a_mat = x_test * sinv_half.transpose();  // nt x qn
  }
  const CholResult och =
      chol_jittered(bundle.posterior.omega, cfg.jitter, "bench: omega");
  VectorXd ox = bundle.posterior.xi;
  och.lower.triangularView<Eigen::Lower>().solveInPlace(ox);
  och.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(ox);
  const VectorXd t0 = x_test * (bundle.v_post * ox);
  MatrixXd t_cov = x_test * bundle.v_post * x_test.transpose();
  t_cov = (0.5 * (t_cov + t_cov.transpose())).eval();
  const CholResult t_chol = chol_jittered(t_cov, cfg.jitter, "bench: t_cov");

  // Per-block truncated factors at the converged variational means.
  std::vector<CholResult> factor_chols;
  std::vector<VectorXd> factor_locs;
  const MatrixXd lam_like = [&] {
    const CholResult gch = chol_jittered(bundle.posterior.gamma_corr,
                                         cfg.jitter, "bench: gamma");
    MatrixXd lam = MatrixXd::Identity(qn, qn);
    gch.lower.triangularView<Eigen::Lower>().solveInPlace(lam);
    gch.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(lam);
    return lam;
  }();
  VectorXd z_mean(qn);
  for (std::size_t c = 0; c < bundle.partition.size(); ++c)
    z_mean.segment(offs[c], bundle.partition[c]) = state.z_means[c];
  const VectorXd resid = lam_like * (z_mean - bundle.posterior.gamma);
  for (std::size_t c = 0; c < bundle.partition.size(); ++c) {
    const int at = offs[c];
    const int k = bundle.partition[c];
    MatrixXd cov = MatrixXd::Identity(k, k);
    CholResult pch = chol_jittered(lam_like.block(at, at, k, k), cfg.jitter,
                                   "bench: pfm prec");
    pch.lower.triangularView<Eigen::Lower>().solveInPlace(cov);
    pch.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(cov);
    cov = (0.5 * (cov + cov.transpose())).eval();
    factor_locs.push_back(bundle.posterior.gamma.segment(at, k) +
                          (z_mean.segment(at, k) -
                           bundle.posterior.gamma.segment(at, k)) -
                          cov * resid.segment(at, k));
    factor_chols.push_back(chol_jittered(cov, cfg.jitter, "bench: pfm cov"));
  }

  VectorXd resp = VectorXd::Zero(nt);
  VectorXd cens = VectorXd::Zero(nt);
  VectorXd z(qn), eps(nt);
  for (int s = 0; s < n_draws; ++s) {
    for (std::size_t c = 0; c < bundle.partition.size(); ++c) {
      const int at = offs[c];
      const int k = bundle.partition[c];
      if (k == 1) {
        const double sd = factor_chols[c].lower(0, 0);
        const double cut = -factor_locs[c](0) / sd;
        z(at) = factor_locs[c](0) + sd * sample_trunc_std_lower(cut, rng);
      } else {
        TruncNormalSpec spec{VectorXd::Zero(k), factor_locs[c],
                             factor_chols[c].lower *
                                 factor_chols[c].lower.transpose()};
        z.segment(at, k) =
            sample_tmvn(spec, 1, rng, cfg).draws.row(0).transpose();
      }
    }
    for (int k = 0; k < nt; ++k) eps(k) = rng.normal();
    const VectorXd t = t0 + a_mat * (z - bundle.eta_post) +
                       t_chol.lower.triangularView<Eigen::Lower>() * eps;
    for (int k = 0; k < nt; ++k) {
      resp(k) += t(k) * norm_cdf(t(k));
      cens(k) += norm_cdf(-t(k));
    }
  }
  out.pred_response = resp / n_draws;
  out.pred_censor = cens / n_draws;
  return out;
}

struct CellOutput {
  std::vector<BenchRow> rows;
  CellSummary summary;
};

CellOutput run_cell(const BenchConfig& config, const EngineConfig& cfg,
                    double kappa, int p, std::uint64_t cell_id) {
  CellOutput out;
  out.summary.kappa = kappa;
  out.summary.p = p;
  RngStream rng = RngStream(config.seed).derive(cell_id);
  try {
    auto [data, truth] = simulate(config, kappa, p, rng);
    (void)truth;
    const UnifiedLikelihood lik = build_tobit(data, 1.0);
    const double prior_var = config.prior_var_numerator / p;
    const SunParams prior = SunParams::gaussian_prior(
        VectorXd::Zero(p), prior_var * MatrixXd::Identity(p, p));
    const PosteriorBundle bundle = update(prior, lik, cfg);

    MatrixXd x_test(config.n_test, p);
    {
      RngStream test_rng = rng.derive(7001);
      for (int i = 0; i < config.n_test; ++i) {
        x_test(i, 0) = 1.0;
        for (int j = 1; j < p; ++j) x_test(i, j) = 0.5 * test_rng.normal();
      }
    }

    RngStream ref_rng = rng.derive(7002);
    const auto ref_tic = Clock::now();
    const ChainOutput ref = iid(bundle, config.n_mc, ref_rng,
                                IidRoute::marginal_latent, cfg);
    out.summary.reference_seconds = seconds_since(ref_tic);
    out.summary.reference_acceptance = ref.acceptance;
    out.summary.reference_exact = ref.exact;
    double ess_scale = 1.0;
    if (!ref.exact) {
      // Fallback draws are autocorrelated; widen the noise floor by the
      // median ESS deficit over a handful of coordinates.
      std::vector<double> scales;
      const int probes = std::min(p, 16);
      for (int j = 0; j < probes; ++j) {
        const double ess = effective_sample_size(ref.draws.col(j));
        scales.push_back(std::sqrt(config.n_mc / std::max(1.0, ess)));
      }
      ess_scale = quantile_type7(scales, 0.5);
    }
    const McReference reference = mc_reference(ref.draws, x_test, ess_scale);
    for (const auto& f : kFunctionals) {
      std::vector<double> se(reference.se.get(f).data(),
                             reference.se.get(f).data() +
                                 reference.se.get(f).size());
      for (auto& v : se) v *= 0.6745;
      out.summary.mc_floor[f] = quantile_type7(se, 0.5);
    }

    struct MethodRun {
      std::string name;
      FunctionalSet fs;
      int n_iter = 0;
      double wall = 0.0;
      bool converged = false;
    };
    std::vector<MethodRun> runs;

    {
      MethodRun run;
      run.name = "mf";
      const auto tic = Clock::now();
      const VbState st =
          mf_vb(bundle, VbOptions{config.vb_tol, config.vb_max_iter}, cfg);
      run.wall = seconds_since(tic);
      const VectorXd t_mean = x_test * st.beta_mean;
      VectorXd t_var(config.n_test);
      const MatrixXd tv = x_test * st.beta_cov * x_test.transpose();
      t_var = tv.diagonal();
      run.fs = gaussian_functionals(st.beta_mean, st.beta_cov.diagonal(),
                                    t_mean, t_var);
      run.n_iter = st.n_iter;
      run.converged = st.converged;
      runs.push_back(std::move(run));
    }
    {
      MethodRun run;
      run.name = "pfm";
      const auto tic = Clock::now();
      const VbState st =
          pfm_vb(bundle, VbOptions{config.vb_tol, config.vb_max_iter}, cfg);
      run.wall = seconds_since(tic);
      run.fs = pfm_functionals(bundle, st, x_test, config.n_mc,
                               rng.derive(7003), cfg);
      run.n_iter = st.n_iter;
      run.converged = st.converged;
      runs.push_back(std::move(run));
    }
    {
      MethodRun run;
      run.name = "ep";
      EpOptions opts;
      opts.tol = config.ep_tol;
      opts.max_iter = config.ep_max_iter;
      opts.with_evidence = false;
      const auto tic = Clock::now();
      const EpState st = [&] {
        EpState s = p >= 100 ? ep_scalable(bundle, opts, cfg)
                             : ep(bundle, opts, cfg);
        return s;
      }();
      run.wall = seconds_since(tic);
      const VectorXd t_mean = x_test * st.mean;
      const VectorXd t_var = ep_test_variances(bundle, st, x_test, cfg);
      run.fs = gaussian_functionals(st.mean, st.cov_diag, t_mean, t_var);
      run.n_iter = st.n_iter;
      run.converged = st.converged;
      runs.push_back(std::move(run));
    }

    for (const auto& run : runs) {
      out.summary.n_iter[run.name] = run.n_iter;
      out.summary.converged[run.name] = run.converged;
      for (const auto& f : kFunctionals) {
        const VectorXd diff =
            (run.fs.get(f) - reference.est.get(f)).cwiseAbs();
        std::vector<double> d(diff.data(), diff.data() + diff.size());
        BenchRow row;
        row.kappa = kappa;
        row.p = p;
        row.method = run.name;
        row.functional = f;
        row.q1 = quantile_type7(d, 0.25);
        row.median = quantile_type7(d, 0.5);
        row.q3 = quantile_type7(d, 0.75);
        row.n_iter = run.n_iter;
        row.wall_time_s = run.wall;
        out.rows.push_back(std::move(row));
      }
    }
  } catch (const std::exception& err) {
    out.summary.ok = false;
    out.summary.error = err.what();
    for (const auto& method : {"mf", "pfm", "ep"}) {
      BenchRow row;
      row.kappa = kappa;
      row.p = p;
      row.method = method;
      row.functional = "status";
      row.q1 = row.median = row.q3 = std::nan("");
      row.status = err.what();
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace

double quantile_type7(std::vector<double> values, double prob) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::pair<Dataset, VectorXd> simulate(const BenchConfig& config, double kappa,
                                      int p, RngStream& rng) {
  if (kappa < 0.0 || kappa >= 1.0)
    throw DimensionMismatch("simulate: kappa must lie in [0, 1)");
  const int n = config.n;
  Dataset data;
  data.x.resize(n, p);
  VectorXd truth(p);
  for (int j = 0; j < p; ++j) truth(j) = -5.0 + 10.0 * rng.uniform();
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) data.x(i, j) = rng.normal();
  }
  VectorXd latent = data.x * truth;
  for (int i = 0; i < n; ++i) latent(i) += rng.normal();

  const int n_censored = static_cast<int>(std::lround(kappa * n));
  double threshold;
  if (n_censored > 0) {
    std::vector<double> sorted(latent.data(), latent.data() + n);
    std::nth_element(sorted.begin(), sorted.begin() + (n_censored - 1),
                     sorted.end());
    threshold = sorted[n_censored - 1];
  } else {
    threshold = latent.minCoeff() - 1.0;
  }
  // The threshold enters the intercept: responses are stored relative to it
  // so the fitted model censors at zero.
  data.y.resize(n);
  for (int i = 0; i < n; ++i)
    data.y(i) = latent(i) > threshold ? latent(i) - threshold : 0.0;

  // Standardize the non-intercept predictors to mean 0, sd 0.5.
  for (int j = 1; j < p; ++j) {
    const double mean = data.x.col(j).mean();
    const double sd = std::sqrt(
        (data.x.col(j).array() - mean).square().sum() / (n - 1));
    if (sd > 0) data.x.col(j) = 0.5 * (data.x.col(j).array() - mean) / sd;
  }
  return {data, truth};
}

BenchResult run_bench(const BenchConfig& config, const EngineConfig& cfg) {
  BenchResult result;
  std::vector<std::pair<double, int>> cells;
  for (double kappa : config.kappa_list)
    for (int p : config.p_list) cells.emplace_back(kappa, p);

  const int threads = config.threads > 0
                          ? config.threads
                          : std::max(1u, std::thread::hardware_concurrency());
  std::vector<CellOutput> outputs(cells.size());
  std::size_t next = 0;
  while (next < cells.size()) {
    const std::size_t batch =
        std::min(cells.size() - next, static_cast<std::size_t>(threads));
    std::vector<std::future<CellOutput>> futures;
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t idx = next + i;
      futures.push_back(std::async(std::launch::async, [&, idx] {
        return run_cell(config, cfg, cells[idx].first, cells[idx].second,
                        static_cast<std::uint64_t>(idx + 1));
      }));
    }
    for (std::size_t i = 0; i < batch; ++i)
      outputs[next + i] = futures[i].get();
    next += batch;
  }
  for (auto& cell : outputs) {
    result.all_ok = result.all_ok && cell.summary.ok;
    result.cells.push_back(cell.summary);
    for (auto& row : cell.rows) result.rows.push_back(row);
  }
  return result;
}

std::vector<ScalingRow> run_scaling(const BenchConfig& config,
                                    const EngineConfig& cfg) {
  std::vector<ScalingRow> rows;
  for (int p : config.p_list) {
    RngStream rng = RngStream(config.seed).derive(90000 + p);
    auto [data, truth] = simulate(config, 0.5, p, rng);
    (void)truth;
    const UnifiedLikelihood lik = build_tobit(data, 1.0);
    const SunParams prior = SunParams::gaussian_prior(
        VectorXd::Zero(p),
        config.prior_var_numerator / p * MatrixXd::Identity(p, p));
    const PosteriorBundle bundle = update(prior, lik, cfg);

    // Warmed per-sweep timings, setup excluded; medians of five repeats.
    for (const std::string method : {"mf", "pfm", "ep"}) {
      std::vector<double> estimates;
      for (int rep = 0; rep < 5; ++rep) {
        double t;
        if (method == "mf")
          t = mf_vb_sweep_seconds(bundle, 10, cfg);
        else if (method == "pfm")
          t = pfm_vb_sweep_seconds(bundle, 10, cfg);
        else
          t = ep_sweep_seconds(bundle, 5, cfg);
        estimates.push_back(t);
      }
      rows.push_back({p, method, quantile_type7(estimates, 0.5)});
    }
  }
  return rows;
}

void write_bench_csv(const std::string& path,
                     const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "kappa,p,method,functional,q1,median,q3,n_iter,wall_time_s,status\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.kappa << ',' << r.p << ',' << r.method << ',' << r.functional
        << ',' << r.q1 << ',' << r.median << ',' << r.q3 << ',' << r.n_iter
        << ',' << r.wall_time_s << ',' << r.status << '\n';
  }
}

void write_scaling_csv(const std::string& path,
                       const std::vector<ScalingRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "p,method,per_iter_seconds\n";
  out.precision(10);
  for (const auto& r : rows)
    out << r.p << ',' << r.method << ',' << r.per_iter_seconds << '\n';
}

void write_summary_json(const std::string& path, const BenchResult& result) {
  nlohmann::json j;
  j["all_ok"] = result.all_ok;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    nlohmann::json cj;
    cj["kappa"] = c.kappa;
    cj["p"] = c.p;
    cj["ok"] = c.ok;
    if (!c.error.empty()) cj["error"] = c.error;
    cj["reference_exact"] = c.reference_exact;
    cj["reference_seconds"] = c.reference_seconds;
    cj["reference_acceptance"] = c.reference_acceptance;
    cj["mc_floor"] = c.mc_floor;
    cj["n_iter"] = c.n_iter;
    cj["converged"] = c.converged;
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace sunbayes
