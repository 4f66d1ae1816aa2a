#pragma once

#include "srmmd/metrics.hpp"
#include "srmmd/rng.hpp"
#include "srmmd/stein.hpp"
#include "srmmd/targets.hpp"
#include "srmmd/witness.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace srmmd {

enum class FlowKind { SrMMD, MMD, HrMMD, KSD, SVGD };

std::string to_string(FlowKind kind);
FlowKind flow_kind_from_string(const std::string& name);

struct ParticleEnsemble {
  Matrix positions;  // N x d
  long step = 0;
};

struct FlowConfig {
  FlowKind kind = FlowKind::SrMMD;
  double gamma = 0.1;     // step size; values outside (0, 1/2) trigger a warning only
  long iterations = 0;    // S
  double lambda = 0.1;    // required > 0 for srmmd / hrmmd
  double alpha = 1.0;     // hrmmd interpolation weight
  double noise = 0.0;     // mmd noise-injection level
  long metric_cadence = 10;
  std::uint64_t seed = 0;
  /// Solve the witness in feature coordinates when the kernel has a finite
  /// feature map (identical witness by the Woodbury identity; O(p^3) per step
  /// instead of O((Nd)^3)).
  bool feature_primal_witness = false;
};

struct MetricRow {
  long step = 0;
  double mmd2 = std::numeric_limits<double>::quiet_NaN();
  double ksd2 = std::numeric_limits<double>::quiet_NaN();
  double w2 = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = std::numeric_limits<double>::quiet_NaN();
};

struct FlowTrajectory {
  Matrix initial;
  Matrix final_positions;
  long steps_completed = 0;
  std::vector<MetricRow> log;
  std::vector<std::pair<long, Matrix>> snapshots;
};

/// Which discrepancies run_flow logs, and against what.
struct MetricPlan {
  const Kernel* mmd_kernel = nullptr;              // log mmd2 against `target` with this kernel
  const TargetRepresentation* target = nullptr;
  const SteinKernel* ksd_kernel = nullptr;         // log ksd2 with this kernel
  std::optional<Matrix> w2_reference;              // log exact W2 against this point set
  long snapshot_cadence = 0;                       // 0 = keep no intermediate snapshots
  /// Called at every logged row with the current positions; lets callers stream
  /// rows out or attach custom metrics, and retains partial logs on divergence.
  std::function<void(const MetricRow&, const MatrixRef& positions)> on_row;
};

/// Velocity v of the configured flow at the current particles; one Euler step is
/// x <- x - gamma * v. SrMMD / HrMMD assemble a fresh witness system on the
/// current ensemble. SVGD returns the negated standard update so the same step
/// rule applies.
Matrix vector_field(const FlowConfig& config, const Kernel& kernel, const TargetRepresentation& target,
                    const ParticleEnsemble& ensemble, const ScoreModel* score = nullptr);

/// x <- x - gamma * field; increments the step index; throws DivergenceError on
/// any non-finite coordinate.
ParticleEnsemble flow_step(const ParticleEnsemble& ensemble, const MatrixRef& field, double gamma);

/// MMD field evaluated at noise-perturbed positions x_i + noise * eps_i,
/// eps_i ~ N(0, I) i.i.d. per particle; the field functional itself is built
/// from the unperturbed ensemble.
Matrix noise_injected_field(const ParticleEnsemble& ensemble,
                            const std::function<Vector(const VectorRef&)>& field_at, double noise,
                            RandomStream& stream);

/// Throws ConfigError on an invalid flow/kernel/target combination.
void validate_flow_setup(const FlowConfig& config, const Kernel& kernel, const TargetRepresentation& target,
                         const ScoreModel* score);

FlowTrajectory run_flow(const FlowConfig& config, const Kernel& kernel, const TargetRepresentation& target,
                        const ParticleEnsemble& initial, const ScoreModel* score = nullptr,
                        const MetricPlan& plan = {});

}  // namespace srmmd
