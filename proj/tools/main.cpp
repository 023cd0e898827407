// Command-line front end: simulate tobit datasets, fit exact posteriors,
// draw samples, run the deterministic approximations, and reproduce the
// accuracy/iteration/scaling benchmark tables.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sunbayes/bench.hpp"
#include "sunbayes/errors.hpp"
#include "sunbayes/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

sunbayes::SunParams default_prior(int p, double var) {
  return sunbayes::SunParams::gaussian_prior(
      sunbayes::VectorXd::Zero(p),
      var * sunbayes::MatrixXd::Identity(p, p));
}

sunbayes::SunParams resolve_prior(const sunbayes::ModelSpec& spec,
                                  const std::string& prior_path,
                                  double prior_var) {
  if (!prior_path.empty()) {
    std::ifstream in(prior_path);
    if (!in) throw sunbayes::IoError("cannot open prior: " + prior_path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return sunbayes::sun_params_from_json(text);
  }
  if (spec.prior) return *spec.prior;
  return default_prior(spec.likelihood.dim(), prior_var);
}

std::vector<std::string> beta_header(int p) {
  std::vector<std::string> header;
  header.reserve(p);
  for (int j = 1; j <= p; ++j) header.push_back("beta_" + std::to_string(j));
  return header;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conjugate Bayesian inference for censored and dichotomized "
               "Gaussian regression models"};
  app.require_subcommand(1);

  sunbayes::EngineConfig engine;
  app.add_option("--accuracy", engine.mvn.accuracy,
                 "CDF estimator std-error target");
  app.add_option("--engine-seed", engine.mvn.seed, "QMC shift seed");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a tobit dataset");
  int sim_n = 200, sim_p = 10;
  double sim_kappa = 0.5;
  std::uint64_t sim_seed = 1;
  std::string sim_out = ".";
  sim->add_option("--n", sim_n, "observations");
  sim->add_option("--p", sim_p, "predictors (including intercept)");
  sim->add_option("--kappa", sim_kappa, "censored proportion");
  sim->add_option("--seed", sim_seed, "rng seed");
  sim->add_option("--out", sim_out, "output directory");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the exact posterior");
  std::string fit_model, fit_prior, fit_out = "posterior.json";
  double fit_prior_var = 100.0;
  bool fit_evidence = false;
  fit->add_option("--model", fit_model, "model spec JSON")->required();
  fit->add_option("--prior", fit_prior, "prior parameters JSON");
  fit->add_option("--prior-var", fit_prior_var,
                  "spherical prior variance when --prior is absent");
  fit->add_option("--out", fit_out, "output JSON path");
  fit->add_flag("--evidence", fit_evidence, "also print the log evidence");

  // sample
  auto* smp = app.add_subcommand("sample", "Draw from the exact posterior");
  std::string smp_model, smp_prior, smp_out = "draws.csv";
  std::string smp_method = "iid";
  double smp_prior_var = 100.0;
  std::uint64_t smp_seed = 1;
  int smp_n = 1000, smp_burn = 500;
  smp->add_option("--model", smp_model, "model spec JSON")->required();
  smp->add_option("--prior", smp_prior, "prior parameters JSON");
  smp->add_option("--prior-var", smp_prior_var, "spherical prior variance");
  smp->add_option("--method", smp_method, "gibbs | iid");
  smp->add_option("--n", smp_n, "number of draws");
  smp->add_option("--burn-in", smp_burn, "gibbs burn-in");
  smp->add_option("--seed", smp_seed, "rng seed");
  smp->add_option("--out", smp_out, "draws CSV path");

  // approx
  auto* apx = app.add_subcommand("approx", "Deterministic approximation");
  std::string apx_model, apx_prior, apx_method = "ep", apx_out;
  double apx_prior_var = 100.0, apx_tol = 1e-6, apx_damping = 1.0;
  int apx_max_iter = 1000;
  apx->add_option("--model", apx_model, "model spec JSON")->required();
  apx->add_option("--prior", apx_prior, "prior parameters JSON");
  apx->add_option("--prior-var", apx_prior_var, "spherical prior variance");
  apx->add_option("--method", apx_method, "mf | pfm | ep");
  apx->add_option("--tol", apx_tol, "convergence tolerance");
  apx->add_option("--max-iter", apx_max_iter, "iteration cap");
  apx->add_option("--damping", apx_damping, "EP site damping");
  apx->add_option("--out", apx_out, "write the JSON here instead of stdout");

  // bench
  auto* bch = app.add_subcommand("bench", "Accuracy and scaling benchmark");
  std::string bch_config, bch_out = "bench_out";
  bool bch_no_scaling = false;
  std::vector<int> bch_p_list;
  std::vector<double> bch_kappa_list;
  int bch_n = 0, bch_n_mc = 0, bch_threads = -1;
  std::uint64_t bch_seed = 0;
  bch->add_option("--config", bch_config, "benchmark config JSON");
  bch->add_option("--out", bch_out, "output directory");
  bch->add_flag("--no-scaling", bch_no_scaling, "skip the scaling sweep");
  bch->add_option("--p-list", bch_p_list, "predictor counts (overrides config)");
  bch->add_option("--kappa-list", bch_kappa_list,
                  "censored proportions (overrides config)");
  bch->add_option("--n", bch_n, "observations per dataset");
  bch->add_option("--n-mc", bch_n_mc, "Monte Carlo reference draws");
  bch->add_option("--seed", bch_seed, "benchmark seed");
  bch->add_option("--threads", bch_threads, "worker threads (0 = hardware)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      sunbayes::BenchConfig config;
      config.n = sim_n;
      config.seed = sim_seed;
      sunbayes::RngStream rng(sim_seed);
      auto [data, truth] = sunbayes::simulate(config, sim_kappa, sim_p, rng);
      fs::create_directories(sim_out);
      std::vector<std::string> xh;
      for (int j = 1; j <= sim_p; ++j) xh.push_back("x" + std::to_string(j));
      sunbayes::write_csv((fs::path(sim_out) / "x.csv").string(), xh, data.x);
      sunbayes::write_csv((fs::path(sim_out) / "y.csv").string(), {"y"},
                          data.y);
      json truth_json;
      truth_json["beta"] = std::vector<double>(truth.data(),
                                               truth.data() + truth.size());
      truth_json["kappa"] = sim_kappa;
      truth_json["seed"] = sim_seed;
      std::ofstream tf(fs::path(sim_out) / "truth.json");
      tf << truth_json.dump(2) << '\n';
      std::cout << "wrote x.csv, y.csv, truth.json to " << sim_out << "\n";
      return 0;
    }

    if (*fit) {
      const sunbayes::ModelSpec spec = sunbayes::load_model_spec(fit_model);
      const sunbayes::SunParams prior =
          resolve_prior(spec, fit_prior, fit_prior_var);
      const sunbayes::PosteriorBundle bundle =
          sunbayes::update(prior, spec.likelihood, engine);
      std::ofstream out(fit_out);
      if (!out) throw sunbayes::IoError("cannot write: " + fit_out);
      out << sunbayes::bundle_to_json(bundle) << '\n';
      std::cout << "posterior written to " << fit_out << "\n";
      if (fit_evidence) {
        const double ev = sunbayes::log_marginal_likelihood(
            bundle, engine.mvn.accuracy, engine);
        std::cout.precision(12);
        std::cout << "log_evidence " << ev << "\n";
      }
      return 0;
    }

    if (*smp) {
      const sunbayes::ModelSpec spec = sunbayes::load_model_spec(smp_model);
      const sunbayes::SunParams prior =
          resolve_prior(spec, smp_prior, smp_prior_var);
      const sunbayes::PosteriorBundle bundle =
          sunbayes::update(prior, spec.likelihood, engine);
      sunbayes::RngStream rng(smp_seed);
      sunbayes::ChainOutput chain;
      if (smp_method == "gibbs") {
        sunbayes::GibbsOptions gopts;
        gopts.burn_in = smp_burn;
        chain = sunbayes::gibbs(bundle, smp_n, rng, gopts, engine);
      } else if (smp_method == "iid") {
        chain = sunbayes::iid(bundle, smp_n, rng,
                              sunbayes::IidRoute::automatic, engine);
      } else {
        throw sunbayes::IoError("unknown sampling method: " + smp_method);
      }
      sunbayes::write_csv(smp_out, beta_header(bundle.posterior.dim()),
                          chain.draws);
      std::cout << "wrote " << smp_n << " draws to " << smp_out
                << (chain.exact ? "" : " (gibbs fallback engaged)") << "\n";
      return 0;
    }

    if (*apx) {
      const sunbayes::ModelSpec spec = sunbayes::load_model_spec(apx_model);
      const sunbayes::SunParams prior =
          resolve_prior(spec, apx_prior, apx_prior_var);
      const sunbayes::PosteriorBundle bundle =
          sunbayes::update(prior, spec.likelihood, engine);
      json out_json;
      if (apx_method == "mf" || apx_method == "pfm") {
        const sunbayes::VbOptions opts{apx_tol, apx_max_iter};
        const sunbayes::VbState st = apx_method == "mf"
                                         ? sunbayes::mf_vb(bundle, opts, engine)
                                         : sunbayes::pfm_vb(bundle, opts,
                                                            engine);
        out_json["mean"] = std::vector<double>(
            st.beta_mean.data(), st.beta_mean.data() + st.beta_mean.size());
        std::vector<double> diag(st.beta_cov.rows());
        for (int i = 0; i < st.beta_cov.rows(); ++i)
          diag[i] = st.beta_cov(i, i);
        out_json["cov_diag"] = diag;
        out_json["elbo"] =
            st.elbo_trace.empty() ? 0.0 : st.elbo_trace.back();
        out_json["n_iter"] = st.n_iter;
        out_json["converged"] = st.converged;
      } else if (apx_method == "ep") {
        sunbayes::EpOptions opts;
        opts.tol = apx_tol;
        opts.max_iter = apx_max_iter;
        opts.damping = apx_damping;
        const sunbayes::EpState st =
            bundle.posterior.dim() >= 100
                ? sunbayes::ep_scalable(bundle, opts, engine)
                : sunbayes::ep(bundle, opts, engine);
        out_json["mean"] = std::vector<double>(
            st.mean.data(), st.mean.data() + st.mean.size());
        out_json["cov_diag"] = std::vector<double>(
            st.cov_diag.data(), st.cov_diag.data() + st.cov_diag.size());
        out_json["log_evidence"] = st.log_evidence;
        out_json["n_iter"] = st.n_iter;
        out_json["converged"] = st.converged;
      } else {
        throw sunbayes::IoError("unknown approximation: " + apx_method);
      }
      if (apx_out.empty()) {
        std::cout << out_json.dump(2) << "\n";
      } else {
        std::ofstream out(apx_out);
        out << out_json.dump(2) << '\n';
      }
      return 0;
    }

    if (*bch) {
      sunbayes::BenchConfig config;
      if (!bch_config.empty()) {
        std::ifstream in(bch_config);
        if (!in) throw sunbayes::IoError("cannot open: " + bch_config);
        json j = json::parse(in);
        config.n = j.value("n", config.n);
        if (j.contains("kappa_list"))
          config.kappa_list = j.at("kappa_list").get<std::vector<double>>();
        if (j.contains("p_list"))
          config.p_list = j.at("p_list").get<std::vector<int>>();
        config.n_mc = j.value("n_mc", config.n_mc);
        config.n_test = j.value("n_test", config.n_test);
        config.seed = j.value("seed", config.seed);
        config.threads = j.value("threads", config.threads);
      }
      if (!bch_p_list.empty()) config.p_list = bch_p_list;
      if (!bch_kappa_list.empty()) config.kappa_list = bch_kappa_list;
      if (bch_n > 0) config.n = bch_n;
      if (bch_n_mc > 0) config.n_mc = bch_n_mc;
      if (bch_seed != 0) config.seed = bch_seed;
      if (bch_threads >= 0) config.threads = bch_threads;
      fs::create_directories(bch_out);
      const sunbayes::BenchResult result = sunbayes::run_bench(config, engine);
      sunbayes::write_bench_csv((fs::path(bch_out) / "bench.csv").string(),
                                result.rows);
      if (!bch_no_scaling) {
        const auto scaling = sunbayes::run_scaling(config, engine);
        sunbayes::write_scaling_csv(
            (fs::path(bch_out) / "scaling.csv").string(), scaling);
      }
      sunbayes::write_summary_json(
          (fs::path(bch_out) / "summary.json").string(), result);
      std::cout << (result.all_ok ? "bench complete" : "bench had failures")
                << "; outputs in " << bch_out << "\n";
      return result.all_ok ? 0 : 1;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
