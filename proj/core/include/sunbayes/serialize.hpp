#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sunbayes/conjugate.hpp"
#include "sunbayes/models.hpp"

namespace sunbayes {

// JSON documents use row-major dense matrices under the declared field
// names: xi, omega_mat, delta, gamma, gamma_corr.
std::string sun_params_to_json(const SunParams& params);
SunParams sun_params_from_json(const std::string& text);

std::string bundle_to_json(const PosteriorBundle& bundle);

// CSV with a header row, comma separated.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const MatrixXd& rows);
MatrixXd read_csv(const std::string& path);

// Model spec document: {model, params, data: {x_csv, y_csv}}. The gp kinds
// carry their own Gaussian prior (from params.kernel_csv / mean_csv);
// otherwise callers supply one.
struct ModelSpec {
  std::string model;
  UnifiedLikelihood likelihood;
  Dataset data;
  std::optional<SunParams> prior;
};
ModelSpec load_model_spec(const std::string& path);

}  // namespace sunbayes
