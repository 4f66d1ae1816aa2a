#include "srmmd/flows.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

namespace srmmd {

std::string to_string(FlowKind kind) {
  switch (kind) {
    case FlowKind::SrMMD: return "srmmd";
    case FlowKind::MMD: return "mmd";
    case FlowKind::HrMMD: return "hrmmd";
    case FlowKind::KSD: return "ksd";
    case FlowKind::SVGD: return "svgd";
  }
  return "unknown";
}

FlowKind flow_kind_from_string(const std::string& name) {
  if (name == "srmmd") return FlowKind::SrMMD;
  if (name == "mmd") return FlowKind::MMD;
  if (name == "hrmmd") return FlowKind::HrMMD;
  if (name == "ksd") return FlowKind::KSD;
  if (name == "svgd") return FlowKind::SVGD;
  throw ConfigError("unknown flow kind: " + name);
}

namespace {

// v_MMD[mu](z) = (1/N) sum_j grad2 k(x_j, z) - E_pi[grad2 k(Y, z)].
Vector mmd_field_at(const Kernel& kernel, const TargetRepresentation& target, const MatrixRef& particles,
                    const VectorRef& z) {
  const Index n = particles.rows();
  Vector field = Vector::Zero(z.size());
  for (Index j = 0; j < n; ++j) field += kernel.grad2(particles.row(j), z);
  field /= static_cast<double>(n);
  field -= target.mean_embedding_grad(kernel, z);
  return field;
}

Matrix mmd_field(const Kernel& kernel, const TargetRepresentation& target, const MatrixRef& particles) {
  Matrix field(particles.rows(), particles.cols());
  for (Index i = 0; i < particles.rows(); ++i) {
    field.row(i) = mmd_field_at(kernel, target, particles, particles.row(i)).transpose();
  }
  return field;
}

// v_KSD[mu](z) = (1/N) sum_j grad2 k_pi(x_j, z), with scores cached per particle.
Matrix ksd_field(const SteinKernel& kernel, const MatrixRef& particles) {
  const Index n = particles.rows();
  const Index d = particles.cols();
  const auto& model = kernel.score_model();
  std::vector<Vector> scores;
  std::vector<Matrix> jacobians;
  scores.reserve(static_cast<std::size_t>(n));
  jacobians.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    scores.push_back(model.score(particles.row(i)));
    jacobians.push_back(model.score_jacobian(particles.row(i)));
  }
  Matrix field = Matrix::Zero(n, d);
  Vector grad1(d), grad2(d);
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      kernel.grads_into(particles.row(j), particles.row(i), scores[static_cast<std::size_t>(j)],
                        scores[static_cast<std::size_t>(i)], jacobians[static_cast<std::size_t>(j)],
                        jacobians[static_cast<std::size_t>(i)], grad1, grad2);
      field.row(i) += grad2.transpose();
      // grad2 k_pi(x_i, x_j) = grad1 k_pi(x_j, x_i) by kernel symmetry
      if (i != j) field.row(j) += grad1.transpose();
    }
  }
  return field / static_cast<double>(n);
}

// Negated SVGD update phi(z) = (1/N) sum_j [k(x_j, z) s(x_j) + grad1 k(x_j, z)].
Matrix svgd_field(const Kernel& kernel, const ScoreModel& score, const MatrixRef& particles) {
  const Index n = particles.rows();
  const Index d = particles.cols();
  std::vector<Vector> scores;
  scores.reserve(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) scores.push_back(score.score(particles.row(j)));
  Matrix phi = Matrix::Zero(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double kv = kernel.eval(particles.row(j), particles.row(i));
      phi.row(i) += (kv * scores[static_cast<std::size_t>(j)] +
                     kernel.grad1(particles.row(j), particles.row(i)))
                        .transpose();
    }
  }
  return -phi / static_cast<double>(n);
}

Matrix srmmd_field(const FlowConfig& config, const Kernel& kernel, const TargetRepresentation& target,
                   const MatrixRef& particles) {
  if (config.feature_primal_witness && kernel.has_feature_map()) {
    // Same witness in feature coordinates; O(p^3) instead of O((Nd)^3).
    std::shared_ptr<const Kernel> alias(&kernel, [](const Kernel*) {});
    const PrimalWitness witness(alias, particles, target, config.lambda);
    Matrix field(particles.rows(), particles.cols());
    for (Index i = 0; i < particles.rows(); ++i) field.row(i) = witness.grad(particles.row(i)).transpose();
    return field;
  }
  std::shared_ptr<const Kernel> alias(&kernel, [](const Kernel*) {});
  const WitnessSystem witness = assemble_witness(alias, particles, target, config.lambda);
  return witness_grad_at_particles(witness);
}

Matrix hrmmd_field(const FlowConfig& config, const Kernel& kernel, const TargetRepresentation& target,
                   const MatrixRef& particles) {
  std::shared_ptr<const Kernel> alias(&kernel, [](const Kernel*) {});
  if (config.feature_primal_witness && kernel.has_feature_map()) {
    const PrimalWitness witness(alias, particles, target, config.lambda, config.alpha);
    Matrix field(particles.rows(), particles.cols());
    for (Index i = 0; i < particles.rows(); ++i) field.row(i) = witness.grad(particles.row(i)).transpose();
    return field;
  }
  const HybridWitnessSystem witness =
      assemble_hybrid_witness(alias, particles, target, config.lambda, config.alpha);
  return hybrid_witness_grad_at_particles(witness);
}

}  // namespace

void validate_flow_setup(const FlowConfig& config, const Kernel& kernel, const TargetRepresentation& target,
                         const ScoreModel* score) {
  const bool stein_target = target.is_stein();
  const auto* stein_kernel = dynamic_cast<const SteinKernel*>(&kernel);
  switch (config.kind) {
    case FlowKind::SrMMD:
    case FlowKind::HrMMD:
      if (!(config.lambda > 0.0)) throw ConfigError(to_string(config.kind) + " requires lambda > 0");
      if (stein_target && stein_kernel == nullptr) {
        throw ConfigError("Stein-mode " + to_string(config.kind) + " requires a Stein kernel");
      }
      if (!stein_target && stein_kernel != nullptr) {
        throw ConfigError("a Stein kernel requires the Stein target representation");
      }
      break;
    case FlowKind::MMD:
      if (stein_target) throw ConfigError("the vanilla MMD flow needs an empirical or analytic target; use ksd");
      break;
    case FlowKind::KSD:
      if (stein_kernel == nullptr) throw ConfigError("the KSD flow requires a Stein kernel");
      if (!stein_target) throw ConfigError("the KSD flow runs against the Stein target representation");
      break;
    case FlowKind::SVGD:
      if (score == nullptr) throw ConfigError("SVGD requires a score model");
      if (!stein_target) throw ConfigError("SVGD runs against the Stein target representation");
      if (stein_kernel != nullptr) throw ConfigError("SVGD uses the base kernel, not a Stein kernel");
      break;
  }
  if (config.noise > 0.0 && config.kind != FlowKind::MMD) {
    throw ConfigError("noise injection applies to the vanilla MMD flow only");
  }
  target.validate_kernel(config.kind == FlowKind::SVGD || stein_kernel == nullptr
                             ? kernel
                             : stein_kernel->base());
}

Matrix vector_field(const FlowConfig& config, const Kernel& kernel, const TargetRepresentation& target,
                    const ParticleEnsemble& ensemble, const ScoreModel* score) {
  validate_flow_setup(config, kernel, target, score);
  const Matrix& x = ensemble.positions;
  switch (config.kind) {
    case FlowKind::SrMMD: return srmmd_field(config, kernel, target, x);
    case FlowKind::HrMMD: return hrmmd_field(config, kernel, target, x);
    case FlowKind::MMD: return mmd_field(kernel, target, x);
    case FlowKind::KSD: return ksd_field(*dynamic_cast<const SteinKernel*>(&kernel), x);
    case FlowKind::SVGD: return svgd_field(kernel, *score, x);
  }
  throw ConfigError("unhandled flow kind");
}

ParticleEnsemble flow_step(const ParticleEnsemble& ensemble, const MatrixRef& field, double gamma) {
  if (field.rows() != ensemble.positions.rows() || field.cols() != ensemble.positions.cols()) {
    throw std::invalid_argument("field shape must match the ensemble");
  }
  ParticleEnsemble next;
  next.positions = ensemble.positions - gamma * field;
  next.step = ensemble.step + 1;
  if (!next.positions.allFinite()) {
    throw DivergenceError("flow diverged at step " + std::to_string(next.step), next.step, ensemble.positions);
  }
  return next;
}

Matrix noise_injected_field(const ParticleEnsemble& ensemble,
                            const std::function<Vector(const VectorRef&)>& field_at, double noise,
                            RandomStream& stream) {
  if (noise < 0.0) throw std::invalid_argument("noise level must be nonnegative");
  const Index n = ensemble.positions.rows();
  const Index d = ensemble.positions.cols();
  Matrix field(n, d);
  for (Index i = 0; i < n; ++i) {
    Vector at = ensemble.positions.row(i);
    if (noise > 0.0) at += noise * stream.normal_vector(d);
    field.row(i) = field_at(at).transpose();
  }
  return field;
}

FlowTrajectory run_flow(const FlowConfig& config, const Kernel& kernel, const TargetRepresentation& target,
                        const ParticleEnsemble& initial, const ScoreModel* score, const MetricPlan& plan) {
  validate_flow_setup(config, kernel, target, score);
  if (config.iterations < 0) throw std::invalid_argument("iteration count must be nonnegative");
  if (!(config.gamma > 0.0) && config.iterations > 0) throw std::invalid_argument("step size must be positive");
  if (config.gamma >= 0.5) {
    std::cerr << "warning: step size " << config.gamma
              << " lies outside (0, 1/2), the regime of the discrete-time decay guarantee\n";
  }

  RandomStream noise_stream(derive_seed(config.seed, "noise"));
  const auto t0 = std::chrono::steady_clock::now();

  FlowTrajectory trajectory;
  trajectory.initial = initial.positions;

  const auto record = [&](const ParticleEnsemble& ensemble) {
    MetricRow row;
    row.step = ensemble.step;
    if (plan.mmd_kernel != nullptr && plan.target != nullptr) {
      row.mmd2 = mmd_squared(*plan.mmd_kernel, ensemble.positions, *plan.target);
    }
    if (plan.ksd_kernel != nullptr) {
      row.ksd2 = ksd_squared(*plan.ksd_kernel, ensemble.positions);
    }
    if (plan.w2_reference && plan.w2_reference->rows() == ensemble.positions.rows()) {
      row.w2 = w2_exact(ensemble.positions, *plan.w2_reference);
    }
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    trajectory.log.push_back(row);
    if (plan.on_row) plan.on_row(row, ensemble.positions);
    if (plan.snapshot_cadence > 0 && ensemble.step % plan.snapshot_cadence == 0) {
      trajectory.snapshots.emplace_back(ensemble.step, ensemble.positions);
    }
  };

  ParticleEnsemble current = initial;
  current.step = 0;
  record(current);
  try {
    for (long s = 0; s < config.iterations; ++s) {
      Matrix field;
      if (config.kind == FlowKind::MMD && config.noise > 0.0) {
        field = noise_injected_field(
            current,
            [&](const VectorRef& z) { return mmd_field_at(kernel, target, current.positions, z); },
            config.noise, noise_stream);
      } else {
        field = vector_field(config, kernel, target, current, score);
      }
      current = flow_step(current, field, config.gamma);
      const bool last = s + 1 == config.iterations;
      if (last || (config.metric_cadence > 0 && current.step % config.metric_cadence == 0)) {
        record(current);
      }
    }
  } catch (DivergenceError& err) {
    err.last_positions = current.positions;  // surface the last finite ensemble
    throw;
  }
  trajectory.final_positions = current.positions;
  trajectory.steps_completed = current.step;
  return trajectory;
}

}  // namespace srmmd
