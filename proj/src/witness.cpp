#include "srmmd/witness.hpp"

#include "srmmd/stein.hpp"

#include <cinttypes>
#include <cstdio>
#include <memory>

namespace srmmd {

namespace {

void check_assembly_args(const Matrix& particles, double lambda) {
  if (particles.rows() < 1) throw std::invalid_argument("witness needs at least one particle");
  check_finite(particles, "particles");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("regularization lambda must be positive and finite");
  }
}

// Per-particle score values/Jacobians so that Gram assembly evaluates the score
// model once per particle instead of once per pair.
struct SteinCache {
  const SteinKernel* kernel = nullptr;
  std::vector<Vector> scores;
  std::vector<Matrix> jacobians;
};

SteinCache make_stein_cache(const Kernel& kernel, const Matrix& particles, bool need_jacobians) {
  SteinCache cache;
  cache.kernel = dynamic_cast<const SteinKernel*>(&kernel);
  if (cache.kernel == nullptr) return cache;
  const auto& model = cache.kernel->score_model();
  cache.scores.reserve(static_cast<std::size_t>(particles.rows()));
  for (Index i = 0; i < particles.rows(); ++i) {
    cache.scores.push_back(model.score(particles.row(i)));
    if (need_jacobians) cache.jacobians.push_back(model.score_jacobian(particles.row(i)));
  }
  return cache;
}

DerivativeStack pair_stack(const Kernel& kernel, const SteinCache& cache, const Matrix& x, Index i, Index j) {
  if (cache.kernel != nullptr) {
    return cache.kernel->derivative_stack_cached(x.row(i), x.row(j), cache.scores[static_cast<std::size_t>(i)],
                                                 cache.scores[static_cast<std::size_t>(j)],
                                                 cache.jacobians[static_cast<std::size_t>(i)],
                                                 cache.jacobians[static_cast<std::size_t>(j)]);
  }
  return kernel.derivative_stack(x.row(i), x.row(j));
}

// Fills D_XX and H_XX. Kernels without closed-form diagonal second derivatives
// (Riesz) get zeroed diagonal H blocks, the documented convention. The Stein
// path writes directly into the Gram blocks without per-pair allocation.
void fill_derivative_grams(const Kernel& kernel, const Matrix& x, Matrix& d_xx, Matrix& h_xx) {
  const Index n = x.rows();
  const Index d = x.cols();
  d_xx.resize(n * d, n);
  h_xx.resize(n * d, n * d);
  const SteinCache cache = make_stein_cache(kernel, x, /*need_jacobians=*/true);
  const bool singular_diagonal = kernel.smooth_order(/*on_diagonal=*/true) < 2;

  if (cache.kernel != nullptr) {
#pragma omp parallel
    {
      Matrix cross(d, d);
      double value = 0.0;
#pragma omp for schedule(dynamic)
      for (Index i = 0; i < n; ++i) {
        for (Index j = i; j < n; ++j) {
          const auto si = static_cast<std::size_t>(i);
          const auto sj = static_cast<std::size_t>(j);
          cache.kernel->stack_into(x.row(i), x.row(j), cache.scores[si], cache.scores[sj], cache.jacobians[si],
                                   cache.jacobians[sj], value, d_xx.col(j).segment(i * d, d),
                                   d_xx.col(i).segment(j * d, d), cross);
          h_xx.block(i * d, j * d, d, d) = cross;
          if (i != j) h_xx.block(j * d, i * d, d, d) = cross.transpose();
        }
      }
    }
    return;
  }

#pragma omp parallel for schedule(dynamic)
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      if (i == j) {
        d_xx.block(i * d, i, d, 1) = kernel.grad1(x.row(i), x.row(i));
        if (!singular_diagonal) {
          h_xx.block(i * d, i * d, d, d) = kernel.cross_hessian(x.row(i), x.row(i));
        }
        continue;
      }
      const DerivativeStack s = pair_stack(kernel, cache, x, i, j);
      d_xx.block(i * d, j, d, 1) = s.grad1;
      d_xx.block(j * d, i, d, 1) = s.grad2;  // grad1(x_j, x_i) by symmetry
      h_xx.block(i * d, j * d, d, d) = s.cross_hessian;
      h_xx.block(j * d, i * d, d, d) = s.cross_hessian.transpose();
    }
  }

  if (singular_diagonal) {
    // The exact diagonal second derivative diverges (Riesz). Use the smallest
    // multiple of the identity that keeps H_XX block diagonally dominant, hence
    // positive semidefinite; zeroing instead makes the regularized system
    // indefinite as soon as two particles come close.
    for (Index i = 0; i < n; ++i) {
      double row_norm_sum = 0.0;
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        row_norm_sum += h_xx.block(i * d, j * d, d, d).selfadjointView<Eigen::Lower>().operatorNorm();
      }
      h_xx.block(i * d, i * d, d, d) = row_norm_sum * Matrix::Identity(d, d);
    }
  }
}

Vector target_grad1_expectations(const Kernel& kernel, const Matrix& x, const TargetRepresentation& target) {
  const Index n = x.rows();
  const Index d = x.cols();
  Vector out(n * d);
  for (Index i = 0; i < n; ++i) out.segment(i * d, d) = target.grad1_expectation(kernel, x.row(i));
  return out;
}

// Column-by-column accumulation. Matches the summation order of the empirical
// target expectations bit for bit, so that a particle set equal to the target
// sample yields r = 0 exactly (the documented fixed point).
Vector sequential_row_sums(const Matrix& m) {
  Vector acc = Vector::Zero(m.rows());
  for (Index j = 0; j < m.cols(); ++j) acc += m.col(j);
  return acc;
}

void check_solve_residual(const Matrix& a, double diagonal_shift, const Vector& solution, const Vector& rhs,
                          const std::string& what) {
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) return;
  const double residual = (a * solution + diagonal_shift * solution - rhs).norm();
  if (residual > 1e-8 * rhs_norm) {
    throw NumericalError(what + ": solve residual " + std::to_string(residual / rhs_norm) +
                         " exceeds 1e-8 relative tolerance");
  }
}

}  // namespace

SpdFactor factor_spd_with_jitter(const Matrix& a, const std::string& what) {
  return factor_spd_shifted(a, 0.0, what);
}

SpdFactor factor_spd_shifted(const Matrix& a, double diagonal_shift, const std::string& what) {
  const Index n = a.rows();
  const double scale = a.trace() / static_cast<double>(n) + diagonal_shift;
  SpdFactor out;
  // the shift is fused into the Cholesky input, avoiding a second full copy
  out.llt.compute(a + diagonal_shift * Matrix::Identity(n, n));
  if (out.llt.info() == Eigen::Success) return out;
  for (double j = 1e-10; j <= 1.0000001e-6; j *= 10.0) {
    const double shift = j * scale;
    out.llt.compute(a + (diagonal_shift + shift) * Matrix::Identity(n, n));
    if (out.llt.info() == Eigen::Success) {
      out.jitter = shift;
      return out;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  std::string report = what + ": SPD factorization failed after jitter escalation";
  if (es.info() == Eigen::Success) {
    report += " (shifted eigenvalue range [" + std::to_string(es.eigenvalues().minCoeff() + diagonal_shift) +
              ", " + std::to_string(es.eigenvalues().maxCoeff() + diagonal_shift) + "])";
  }
  throw NumericalError(report);
}

WitnessSystem assemble_witness(std::shared_ptr<const Kernel> kernel, Matrix particles,
                               TargetRepresentation target, double lambda) {
  check_assembly_args(particles, lambda);
  target.validate_kernel(*kernel);

  WitnessSystem w;
  w.kernel = std::move(kernel);
  w.particles = std::move(particles);
  w.target = std::move(target);
  w.lambda = lambda;

  const Index n = w.particles.rows();
  fill_derivative_grams(*w.kernel, w.particles, w.d_xx, w.h_xx);
  w.r = sequential_row_sums(w.d_xx) / static_cast<double>(n) -
        target_grad1_expectations(*w.kernel, w.particles, w.target);

  const SpdFactor factor = factor_spd_shifted(w.h_xx, static_cast<double>(n) * lambda, "witness system");
  w.jitter = factor.jitter;
  const Vector b = factor.llt.solve(w.r);
  check_solve_residual(w.h_xx, static_cast<double>(n) * lambda + factor.jitter, b, w.r, "witness system");
  w.beta = b / lambda;
  return w;
}

double witness_eval(const WitnessSystem& w, const VectorRef& z) {
  const Index n = w.particle_count();
  const Index d = w.dim();
  double k_sum = 0.0;
  double d_dot = 0.0;
  const bool singular_diagonal = w.kernel->smooth_order(true) < 2;
  for (Index i = 0; i < n; ++i) {
    k_sum += w.kernel->eval(w.particles.row(i), z);
    if (singular_diagonal && (w.particles.row(i).transpose() - z).squaredNorm() == 0.0) {
      continue;  // grad1(x, x) = 0 under the diagonal convention
    }
    d_dot += w.kernel->grad1(w.particles.row(i), z).dot(w.beta.segment(i * d, d));
  }
  return (k_sum / static_cast<double>(n) - w.target.mean_embedding(*w.kernel, z)) / w.lambda - d_dot;
}

Vector witness_grad(const WitnessSystem& w, const VectorRef& z) {
  const Index n = w.particle_count();
  const Index d = w.dim();
  Vector grad2_sum = Vector::Zero(d);
  Vector correction = Vector::Zero(d);
  const bool singular_diagonal = w.kernel->smooth_order(true) < 2;
  for (Index i = 0; i < n; ++i) {
    if (singular_diagonal && (w.particles.row(i).transpose() - z).squaredNorm() == 0.0) {
      // grad2 vanishes by the subgradient convention; the cross-Hessian block is
      // the assembled diagonal surrogate, kept consistent with the solved system
      correction.noalias() += w.h_xx.block(i * d, i * d, d, d).transpose() * w.beta.segment(i * d, d);
      continue;
    }
    const DerivativeStack s = w.kernel->derivative_stack(w.particles.row(i), z);
    grad2_sum += s.grad2;
    correction.noalias() += s.cross_hessian.transpose() * w.beta.segment(i * d, d);
  }
  return (grad2_sum / static_cast<double>(n) - w.target.mean_embedding_grad(*w.kernel, z)) / w.lambda -
         correction;
}

Matrix witness_grad_at_particles(const WitnessSystem& w) {
  const Index n = w.particle_count();
  const Index d = w.dim();
  // d2_m k(x_i, x_j) = [D_XX]((j,m), i), so the first term is a row sum of D_XX;
  // the correction term is H_XX beta rearranged, since H is symmetric.
  const Vector d_row_sums = sequential_row_sums(w.d_xx);
  const Vector h_beta = w.h_xx * w.beta;
  Matrix grad(n, d);
  for (Index j = 0; j < n; ++j) {
    const Vector mean_grad = w.target.mean_embedding_grad(*w.kernel, w.particles.row(j));
    grad.row(j) = ((d_row_sums.segment(j * d, d) / static_cast<double>(n) - mean_grad) / w.lambda -
                   h_beta.segment(j * d, d))
                      .transpose();
  }
  return grad;
}

HybridWitnessSystem assemble_hybrid_witness(std::shared_ptr<const Kernel> kernel, Matrix particles,
                                            TargetRepresentation target, double lambda, double alpha) {
  check_assembly_args(particles, lambda);
  if (!(alpha >= 0.0) || !(alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  target.validate_kernel(*kernel);

  HybridWitnessSystem w;
  w.kernel = std::move(kernel);
  w.particles = std::move(particles);
  w.target = std::move(target);
  w.lambda = lambda;
  w.alpha = alpha;

  const Index n = w.particles.rows();
  const Index d = w.particles.cols();
  w.k_xx = gram_matrix(*w.kernel, w.particles);
  fill_derivative_grams(*w.kernel, w.particles, w.d_xx, w.h_xx);

  w.g.resize(n);
  for (Index i = 0; i < n; ++i) {
    double k_sum = 0.0;
    for (Index j = 0; j < n; ++j) k_sum += w.k_xx(i, j);
    w.g[i] = k_sum / static_cast<double>(n) - w.target.mean_embedding(*w.kernel, w.particles.row(i));
  }
  w.r = sequential_row_sums(w.d_xx) / static_cast<double>(n) -
        target_grad1_expectations(*w.kernel, w.particles, w.target);

  const double cross = std::sqrt(alpha * (1.0 - alpha));
  Matrix block(n + n * d, n + n * d);
  block.topLeftCorner(n, n) = (1.0 - alpha) * w.k_xx;
  block.topRightCorner(n, n * d) = cross * w.d_xx.transpose();
  block.bottomLeftCorner(n * d, n) = cross * w.d_xx;
  block.bottomRightCorner(n * d, n * d) = alpha * w.h_xx;
  block.diagonal().array() += static_cast<double>(n) * lambda;

  Vector rhs(n + n * d);
  rhs.head(n) = std::sqrt(1.0 - alpha) * w.g;
  rhs.tail(n * d) = std::sqrt(alpha) * w.r;

  const SpdFactor factor = factor_spd_with_jitter(block, "hybrid witness system");
  w.jitter = factor.jitter;
  const Vector solution = factor.llt.solve(rhs);
  check_solve_residual(block, factor.jitter, solution, rhs, "hybrid witness system");
  w.beta_k = solution.head(n);
  w.beta_d = solution.tail(n * d);
  return w;
}

double hybrid_witness_eval(const HybridWitnessSystem& w, const VectorRef& z) {
  const Index n = w.particles.rows();
  const Index d = w.particles.cols();
  const double sqrt_l2 = std::sqrt(1.0 - w.alpha);
  const double sqrt_grad = std::sqrt(w.alpha);
  const bool singular_diagonal = w.kernel->smooth_order(true) < 2;
  double k_sum = 0.0;
  double k_coef = 0.0;
  double d_coef = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double kv = w.kernel->eval(w.particles.row(i), z);
    k_sum += kv;
    k_coef += w.beta_k[i] * kv;
    if (singular_diagonal && (w.particles.row(i).transpose() - z).squaredNorm() == 0.0) continue;
    d_coef += w.kernel->grad1(w.particles.row(i), z).dot(w.beta_d.segment(i * d, d));
  }
  const double mean_term = k_sum / static_cast<double>(n) - w.target.mean_embedding(*w.kernel, z);
  return (mean_term - (sqrt_l2 * k_coef + sqrt_grad * d_coef)) / w.lambda;
}

Vector hybrid_witness_grad(const HybridWitnessSystem& w, const VectorRef& z) {
  const Index n = w.particles.rows();
  const Index d = w.particles.cols();
  const double sqrt_l2 = std::sqrt(1.0 - w.alpha);
  const double sqrt_grad = std::sqrt(w.alpha);
  const bool singular_diagonal = w.kernel->smooth_order(true) < 2;
  Vector grad2_sum = Vector::Zero(d);
  Vector k_term = Vector::Zero(d);
  Vector d_term = Vector::Zero(d);
  for (Index i = 0; i < n; ++i) {
    if (singular_diagonal && (w.particles.row(i).transpose() - z).squaredNorm() == 0.0) {
      d_term.noalias() += w.h_xx.block(i * d, i * d, d, d).transpose() * w.beta_d.segment(i * d, d);
      continue;
    }
    const DerivativeStack s = w.kernel->derivative_stack(w.particles.row(i), z);
    grad2_sum += s.grad2;
    k_term += w.beta_k[i] * s.grad2;
    d_term.noalias() += s.cross_hessian.transpose() * w.beta_d.segment(i * d, d);
  }
  const Vector mean_term = grad2_sum / static_cast<double>(n) - w.target.mean_embedding_grad(*w.kernel, z);
  return (mean_term - (sqrt_l2 * k_term + sqrt_grad * d_term)) / w.lambda;
}

Matrix hybrid_witness_grad_at_particles(const HybridWitnessSystem& w) {
  const Index n = w.particles.rows();
  const Index d = w.particles.cols();
  const double sqrt_l2 = std::sqrt(1.0 - w.alpha);
  const double sqrt_grad = std::sqrt(w.alpha);
  // d2 k at the particles comes from D_XX, the cross-Hessian contraction from H_XX.
  const Vector d_row_sums = sequential_row_sums(w.d_xx);
  const Vector h_beta = w.h_xx * w.beta_d;
  const Vector d_beta_k = w.d_xx * w.beta_k;
  Matrix grad(n, d);
  for (Index j = 0; j < n; ++j) {
    Vector g = d_row_sums.segment(j * d, d) / static_cast<double>(n);
    g -= w.target.mean_embedding_grad(*w.kernel, w.particles.row(j));
    g -= sqrt_l2 * d_beta_k.segment(j * d, d);
    g -= sqrt_grad * h_beta.segment(j * d, d);
    grad.row(j) = g.transpose() / w.lambda;
  }
  return grad;
}

PrimalWitness::PrimalWitness(std::shared_ptr<const Kernel> kernel, Matrix particles,
                             const TargetRepresentation& target, double lambda, double alpha)
    : kernel_(std::move(kernel)) {
  check_assembly_args(particles, lambda);
  if (!(alpha >= 0.0) || !(alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!kernel_->has_feature_map()) {
    throw CapabilityError("primal witness requires a kernel with a finite-dimensional feature map");
  }
  const Index n = particles.rows();
  const Index d = particles.cols();
  const Index p = kernel_->feature_dim(d);

  s_ = Matrix::Zero(p, p);
  Vector mean_features = Vector::Zero(p);
  for (Index i = 0; i < n; ++i) {
    if (alpha > 0.0) {
      const Matrix jac = kernel_->feature_jacobian(particles.row(i));
      s_.selfadjointView<Eigen::Lower>().rankUpdate(jac, alpha / static_cast<double>(n));
    }
    const Vector phi = kernel_->feature_map(particles.row(i));
    if (alpha < 1.0) {
      s_.selfadjointView<Eigen::Lower>().rankUpdate(phi, (1.0 - alpha) / static_cast<double>(n));
    }
    mean_features += phi;
  }
  s_ = s_.selfadjointView<Eigen::Lower>();
  mean_features /= static_cast<double>(n);

  Vector target_features = Vector::Zero(p);
  switch (target.kind()) {
    case TargetRepresentation::Kind::Stein:
      break;  // m_pi = 0
    case TargetRepresentation::Kind::Empirical: {
      const Matrix& y = target.samples();
      for (Index j = 0; j < y.rows(); ++j) target_features += kernel_->feature_map(y.row(j));
      target_features /= static_cast<double>(y.rows());
      break;
    }
    case TargetRepresentation::Kind::AnalyticGaussianMixture:
      throw CapabilityError("primal witness does not support analytic mixture targets");
  }

  const SpdFactor factor = factor_spd_shifted(s_, lambda, "primal witness");
  w_ = factor.llt.solve(mean_features - target_features);
  check_solve_residual(s_, lambda + factor.jitter, w_, Vector(mean_features - target_features),
                       "primal witness");
}

double PrimalWitness::eval(const VectorRef& z) const { return kernel_->feature_map(z).dot(w_); }

Vector PrimalWitness::grad(const VectorRef& z) const { return kernel_->feature_jacobian(z).transpose() * w_; }

void dump_witness_system(const WitnessSystem& w, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot open dump file: " + path);
  const Index n = w.particle_count();
  const Index d = w.dim();
  // Layout: header, then one matrix per section, row-major CSV rows. Row index of
  // D_XX/H_XX is the flattened (particle, coordinate) pair i*d + l.
  std::fprintf(f, "srmmd-witness-dump,1\n");
  std::fprintf(f, "N,%" PRIdPTR "\nd,%" PRIdPTR "\nlambda,%.17g\njitter,%.17g\n", static_cast<intptr_t>(n),
               static_cast<intptr_t>(d), w.lambda, w.jitter);
  const auto write_matrix = [&](const char* name, const Matrix& m) {
    std::fprintf(f, "%s,%" PRIdPTR ",%" PRIdPTR "\n", name, static_cast<intptr_t>(m.rows()),
                 static_cast<intptr_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) std::fprintf(f, j == 0 ? "%.17g" : ",%.17g", m(i, j));
      std::fputc('\n', f);
    }
  };
  write_matrix("D_XX", w.d_xx);
  write_matrix("H_XX", w.h_xx);
  write_matrix("r", Matrix(w.r));
  write_matrix("beta", Matrix(w.beta));
  std::fclose(f);
}

}  // namespace srmmd
