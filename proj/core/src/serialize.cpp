#include "sunbayes/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sunbayes/errors.hpp"

#include <utility>

namespace sunbayes {

namespace {

using nlohmann::json;

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

MatrixXd matrix_from_json(const json& j) {
  const auto r = j.size();
  const auto c = r == 0 ? 0 : j.at(0).size();
  MatrixXd m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (j.at(i).size() != c) throw IoError("ragged matrix in JSON");
    for (std::size_t k = 0; k < c; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

VectorXd vector_from_json(const json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

}  // namespace

std::string sun_params_to_json(const SunParams& params) {
  json j;
  j["xi"] = vector_to_json(params.xi);
  j["omega_mat"] = matrix_to_json(params.omega);
  j["delta"] = matrix_to_json(params.delta);
  j["gamma"] = vector_to_json(params.gamma);
  j["gamma_corr"] = matrix_to_json(params.gamma_corr);
  return j.dump(2);
}

SunParams sun_params_from_json(const std::string& text) {
  json j = json::parse(text);
  SunParams p;
  p.xi = vector_from_json(j.at("xi"));
  p.omega = matrix_from_json(j.at("omega_mat"));
  p.gamma = vector_from_json(j.at("gamma"));
  p.gamma_corr = matrix_from_json(j.at("gamma_corr"));
  p.delta = matrix_from_json(j.at("delta"));
  if (p.delta.size() == 0) p.delta = MatrixXd(p.xi.size(), 0);
  return p;
}

std::string bundle_to_json(const PosteriorBundle& bundle) {
  json j = json::parse(sun_params_to_json(bundle.posterior));
  j["partition"] = bundle.partition;
  j["x_post"] = matrix_to_json(bundle.x_post);
  j["eta_post"] = vector_to_json(bundle.eta_post);
  json blocks = json::array();
  for (const auto& b : bundle.sigma_post_blocks)
    blocks.push_back(matrix_to_json(b));
  j["sigma_post_blocks"] = std::move(blocks);
  j["v_post"] = matrix_to_json(bundle.v_post);
  j["log_s0"] = vector_to_json(bundle.log_s0);
  j["log_s1"] = vector_to_json(bundle.log_s1);
  j["log_evidence_base"] = bundle.log_evidence_base;
  return j.dump(2);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const MatrixXd& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  out.precision(17);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      if (c) out << ',';
      out << rows(r, c);
    }
    out << '\n';
  }
}

MatrixXd read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty csv: " + path);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return MatrixXd(0, 0);
  MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != static_cast<std::size_t>(m.cols()))
      throw IoError("ragged csv: " + path);
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

ModelSpec load_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  json j = json::parse(in);
  ModelSpec spec;
  spec.model = j.at("model").get<std::string>();
  const json params = j.value("params", json::object());
  const json data = j.at("data");

  spec.data.x = read_csv(data.at("x_csv").get<std::string>());
  const MatrixXd y_raw = read_csv(data.at("y_csv").get<std::string>());
  if (y_raw.cols() == 1) {
    spec.data.y = y_raw.col(0);
  } else {
    spec.data.y_mat = y_raw;
  }

  const double sigma2 = params.value("sigma2", 1.0);
  const double alpha = params.value("alpha", 1.0);
  if (spec.model == "linear") {
    spec.likelihood = build_linear(spec.data, sigma2);
  } else if (spec.model == "probit") {
    spec.likelihood = build_probit(spec.data);
  } else if (spec.model == "probit_threshold") {
    spec.likelihood =
        build_probit_threshold(spec.data, params.value("threshold", 0.0));
  } else if (spec.model == "tobit") {
    spec.likelihood = build_tobit(spec.data, sigma2);
  } else if (spec.model == "sn_linear") {
    spec.likelihood = build_sn_linear(spec.data, sigma2, alpha);
  } else if (spec.model == "sn_probit") {
    spec.likelihood = build_sn_probit(spec.data, sigma2, alpha);
  } else if (spec.model == "sn_tobit") {
    spec.likelihood = build_sn_tobit(spec.data, sigma2, alpha);
  } else if (spec.model == "gp_linear" || spec.model == "gp_probit") {
    const MatrixXd kernel = read_csv(params.at("kernel_csv").get<std::string>());
    VectorXd mean_fn = VectorXd::Zero(kernel.rows());
    if (params.contains("mean_csv"))
      mean_fn = read_csv(params.at("mean_csv").get<std::string>()).col(0);
    const GpKind kind =
        spec.model == "gp_linear" ? GpKind::linear : GpKind::probit;
    auto [lik, prior] = build_gp(kernel, mean_fn, spec.data, kind, sigma2);
    spec.likelihood = std::move(lik);
    spec.prior = std::move(prior);
  } else if (spec.model == "multivariate_probit" ||
             spec.model == "multinomial_probit" ||
             spec.model == "linear_mv") {
    MatrixXd sigma;
    if (params.contains("sigma")) {
      sigma = matrix_from_json(params.at("sigma"));
    } else {
      const int m = spec.model == "multinomial_probit"
                        ? params.at("levels").get<int>()
                        : static_cast<int>(spec.data.y_mat.cols());
      sigma = MatrixXd::Identity(m, m);
    }
    if (spec.model == "multivariate_probit")
      spec.likelihood = build_multivariate_probit(spec.data, sigma);
    else if (spec.model == "linear_mv")
      spec.likelihood = build_linear_mv(spec.data, sigma);
    else
      spec.likelihood = build_multinomial_probit(spec.data, sigma);
  } else {
    throw IoError("unknown model kind: " + spec.model);
  }
  return spec;
}

}  // namespace sunbayes
