#pragma once

#include "srmmd/flows.hpp"
#include "srmmd/ppm.hpp"

#include <json.hpp>

#include <memory>
#include <string>

namespace srmmd {

using Json = nlohmann::json;

/// Kernel from a config spec: {"kind": "gaussian"|"polynomial"|"riesz"|"feature", ...}.
std::shared_ptr<Kernel> make_kernel(const Json& spec, Json* resolved = nullptr);

/// Gaussian mixture from {"preset": "four_gaussian"|"ten_ring"|"std_normal", ...}
/// or explicit {"weights": [...], "means": [[...]], "covariances": [[[...]]]}.
GaussianMixture make_mixture(const Json& spec, Json* resolved = nullptr);

/// Score-based target from {"target": "gaussian_mixture"|"logistic_posterior", ...}.
struct ScoreTarget {
  std::shared_ptr<ScoreModel> score;
  std::shared_ptr<const GaussianMixture> mixture;      // set for mixture targets
  std::shared_ptr<const LogisticPosterior> posterior;  // set for logistic targets
  Json resolved;
};
ScoreTarget make_score_target(const Json& spec);

/// Runs one configured experiment and writes metrics.csv, particles_initial.csv,
/// particles_final.csv, and config_resolved.json (plus experiment-specific files)
/// under out_dir. Validates the full configuration before creating any file.
/// Returns the resolved configuration (every applied default filled in).
Json run_experiment(Json config, const std::string& out_dir);

/// Color transfer (source colors flow toward the target color distribution):
/// samples particle_count colors from each image without replacement, runs the
/// configured flow, then recolors each source pixel by the transported color of
/// its nearest initial particle (squared distance, ties to the lowest index).
PpmImage color_transfer(const PpmImage& source, const PpmImage& target, std::shared_ptr<const Kernel> kernel,
                        const FlowConfig& flow, Index particle_count);

/// Resolves the output directory: absolute paths are kept; relative paths are
/// placed under the SRMMD_OUTPUT_ROOT environment variable when it is set.
std::string resolve_output_dir(const std::string& requested);

void write_particles_csv(const std::string& path, long step, const MatrixRef& positions);
Matrix read_particles_csv(const std::string& path);
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows, bool include_walltime);

}  // namespace srmmd
