#pragma once

#include "srmmd/kernels.hpp"
#include "srmmd/targets.hpp"

#include <memory>
#include <string>

namespace srmmd {

/// Symmetric positive-definite factorization with jitter escalation: on failure,
/// retry with A + j * (trace(A)/n) * I for j = 1e-10, 1e-9, ..., 1e-6, then fail
/// with a condition report. Returns the factor and the jitter actually applied.
struct SpdFactor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;  // absolute diagonal shift applied
};

SpdFactor factor_spd_with_jitter(const Matrix& a, const std::string& what);

/// Factorizes a + diagonal_shift * I without materializing the shifted matrix.
SpdFactor factor_spd_shifted(const Matrix& a, double diagonal_shift, const std::string& what);

/// Finite-particle dual system of the regularized witness
///   f = (S_mu + lambda Id)^-1 (m_mu - m_pi):
/// D_XX[(i,l), j] = d1_l k(x_i, x_j), H_XX[(i,l), (j,m)] = d1_l d2_m k(x_i, x_j),
/// r = D_XX 1/N - E_pi[D_X(Y)], beta = (H_XX + N lambda Id)^-1 r / lambda.
/// Flattened index (i, l) -> i*d + l (particle-major).
struct WitnessSystem {
  std::shared_ptr<const Kernel> kernel;
  Matrix particles;  // N x d
  TargetRepresentation target = TargetRepresentation::stein();
  double lambda = 0.0;

  Matrix d_xx;  // Nd x N
  Matrix h_xx;  // Nd x Nd
  Vector r;     // Nd
  Vector beta;  // Nd
  double jitter = 0.0;

  Index particle_count() const { return particles.rows(); }
  Index dim() const { return particles.cols(); }
};

WitnessSystem assemble_witness(std::shared_ptr<const Kernel> kernel, Matrix particles,
                               TargetRepresentation target, double lambda);

/// f(z) = 1^T K_X(z) / (N lambda) - E_pi[k(Y, z)] / lambda - D_X(z)^T beta.
double witness_eval(const WitnessSystem& w, const VectorRef& z);

/// Analytic gradient of witness_eval in z.
Vector witness_grad(const WitnessSystem& w, const VectorRef& z);

/// Witness value and gradient at every particle, computed from the assembled
/// Gram blocks without further kernel evaluations.
Matrix witness_grad_at_particles(const WitnessSystem& w);

/// Writes (D_XX, H_XX, r, beta) to a CSV file with a documented layout for
/// cross-implementation diffing.
void dump_witness_system(const WitnessSystem& w, const std::string& path);

/// Hybrid (L2 + gradient) regularized witness of the block system
///   [[(1-a) K_XX, sqrt(a(1-a)) D_XX^T], [sqrt(a(1-a)) D_XX, a H_XX]] + N lambda Id.
struct HybridWitnessSystem {
  std::shared_ptr<const Kernel> kernel;
  Matrix particles;
  TargetRepresentation target = TargetRepresentation::stein();
  double lambda = 0.0;
  double alpha = 1.0;

  Matrix k_xx;   // N x N
  Matrix d_xx;   // Nd x N
  Matrix h_xx;   // Nd x Nd
  Vector g;      // N
  Vector r;      // Nd
  Vector beta_k; // N
  Vector beta_d; // Nd
  double jitter = 0.0;
};

HybridWitnessSystem assemble_hybrid_witness(std::shared_ptr<const Kernel> kernel, Matrix particles,
                                            TargetRepresentation target, double lambda, double alpha);

double hybrid_witness_eval(const HybridWitnessSystem& w, const VectorRef& z);
Vector hybrid_witness_grad(const HybridWitnessSystem& w, const VectorRef& z);
Matrix hybrid_witness_grad_at_particles(const HybridWitnessSystem& w);

/// Witness in explicit feature coordinates, for kernels with a finite feature map:
/// solves (S + lambda Id) w = mean Phi(X) - mean Phi(Y) in R^p with
/// S = (1/N) sum_i J_Phi(x_i) J_Phi(x_i)^T. The operator form of the witness,
/// realizable exactly when the RKHS is finite-dimensional; serves as the
/// independent oracle for the dual route, and as a fast route when p << N d.
class PrimalWitness {
 public:
  /// alpha interpolates the regularizer in feature coordinates:
  /// alpha S + (1 - alpha) Sigma + lambda Id, with Sigma = (1/N) sum Phi_i Phi_i^T;
  /// alpha = 1 is the plain gradient-penalized witness.
  PrimalWitness(std::shared_ptr<const Kernel> kernel, Matrix particles, const TargetRepresentation& target,
                double lambda, double alpha = 1.0);

  double eval(const VectorRef& z) const;
  Vector grad(const VectorRef& z) const;
  const Vector& coefficients() const { return w_; }
  const Matrix& operator_matrix() const { return s_; }

 private:
  std::shared_ptr<const Kernel> kernel_;
  Matrix s_;   // p x p gradient covariance in feature coordinates
  Vector w_;   // p
};

/// Spec-named alias: the operator-form witness oracle.
inline PrimalWitness primal_witness_oracle(std::shared_ptr<const Kernel> kernel, Matrix particles,
                                           const TargetRepresentation& target, double lambda) {
  return PrimalWitness(std::move(kernel), std::move(particles), target, lambda);
}

}  // namespace srmmd
