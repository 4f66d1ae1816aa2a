#pragma once

#include "srmmd/types.hpp"

#include <memory>
#include <vector>

namespace srmmd {

/// Value and analytic derivatives of a kernel at one argument pair.
/// cross_hessian(l, m) = d/dx_l d/dy_m k(x, y).
struct DerivativeStack {
  double value = 0.0;
  Vector grad1;
  Vector grad2;
  Matrix cross_hessian;
};

/// A positive-definite kernel with closed-form derivatives. Derivatives are never
/// obtained by numerical differentiation here; finite differences live in tests only.
class Kernel {
 public:
  virtual ~Kernel() = default;

  virtual double eval(const VectorRef& x, const VectorRef& y) const = 0;

  /// Gradient with respect to the first argument.
  virtual Vector grad1(const VectorRef& x, const VectorRef& y) const = 0;

  /// Gradient with respect to the second argument; equals grad1 with swapped
  /// arguments for symmetric kernels.
  Vector grad2(const VectorRef& x, const VectorRef& y) const { return grad1(y, x); }

  virtual Matrix cross_hessian(const VectorRef& x, const VectorRef& y) const = 0;

  virtual DerivativeStack derivative_stack(const VectorRef& x, const VectorRef& y) const;

  /// Highest derivative order available in closed form at a generic point.
  virtual int smooth_order(bool on_diagonal = false) const = 0;

  /// Closed-form radial profile derivatives psi, psi', ..., psi^(max_order), as a
  /// function of u = |x-y|^2 for smooth radial kernels (Riesz uses t = |x-y|).
  virtual std::vector<double> profile_derivatives(double u, int max_order) const;
  /// Allocation-free variant for hot loops; out must hold max_order + 1 entries.
  virtual void profile_derivatives_into(double u, int max_order, double* out) const;
  virtual bool is_radial_smooth() const { return false; }

  /// Explicit finite-dimensional feature map, when one exists:
  /// k(x, y) = feature_map(x) . feature_map(y).
  virtual bool has_feature_map() const { return false; }
  virtual Index feature_dim(Index input_dim) const;
  virtual Vector feature_map(const VectorRef& x) const;
  /// Jacobian of the feature map, feature_dim x d.
  virtual Matrix feature_jacobian(const VectorRef& x) const;

 protected:
  static void check_pair(const VectorRef& x, const VectorRef& y);
};

/// k(x, y) = exp(-|x-y|^2 / (2 sigma^2)). Profile psi(u) = exp(-u / (2 sigma^2)).
class GaussianKernel final : public Kernel {
 public:
  explicit GaussianKernel(double sigma);

  double eval(const VectorRef& x, const VectorRef& y) const override;
  Vector grad1(const VectorRef& x, const VectorRef& y) const override;
  Matrix cross_hessian(const VectorRef& x, const VectorRef& y) const override;
  DerivativeStack derivative_stack(const VectorRef& x, const VectorRef& y) const override;
  int smooth_order(bool = false) const override { return 4; }
  std::vector<double> profile_derivatives(double u, int max_order) const override;
  void profile_derivatives_into(double u, int max_order, double* out) const override;
  bool is_radial_smooth() const override { return true; }

  double sigma() const { return sigma_; }

 private:
  double sigma_;
  double slope_;  // -1 / (2 sigma^2)
};

/// k(x, y) = (x . y + c)^2 with explicit quadratic feature map of dimension
/// 1 + d + d(d+1)/2.
class PolynomialQuadraticKernel final : public Kernel {
 public:
  explicit PolynomialQuadraticKernel(double offset = 1.0);

  double eval(const VectorRef& x, const VectorRef& y) const override;
  Vector grad1(const VectorRef& x, const VectorRef& y) const override;
  Matrix cross_hessian(const VectorRef& x, const VectorRef& y) const override;
  int smooth_order(bool = false) const override { return 2; }

  bool has_feature_map() const override { return true; }
  Index feature_dim(Index input_dim) const override;
  Vector feature_map(const VectorRef& x) const override;
  Matrix feature_jacobian(const VectorRef& x) const override;

  double offset() const { return offset_; }

 private:
  double offset_;
};

/// k(x, y) = -|x-y|^r for r in (0, 2]. Outside Assumptions 2.1/2.2; the diagonal
/// uses the subgradient convention grad1(x, x) = 0 and the cross-Hessian is
/// singular at x = y.
class RieszKernel final : public Kernel {
 public:
  explicit RieszKernel(double exponent = 1.0);

  double eval(const VectorRef& x, const VectorRef& y) const override;
  Vector grad1(const VectorRef& x, const VectorRef& y) const override;
  Matrix cross_hessian(const VectorRef& x, const VectorRef& y) const override;
  int smooth_order(bool on_diagonal = false) const override { return on_diagonal ? 0 : 1; }
  std::vector<double> profile_derivatives(double t, int max_order) const override;

  double exponent() const { return exponent_; }

 private:
  double exponent_;
};

/// Two-layer probe network of the student-teacher construction:
/// psi(z, theta) = G(b1 + w1 * relu(w0 . z + b0)), G(x) = exp(-x^2 / 4),
/// theta = (b1, w1, b0, w0) in R^53 for 50-dimensional probes.
namespace probe_net {

inline constexpr Index kProbeDim = 50;
inline constexpr Index kThetaDim = 53;  // 1 + 1 + 1 + 50

struct PsiEval {
  Vector psi;       // B values psi(z_b, theta)
  Matrix jacobian;  // kThetaDim x B, column b = d psi(z_b, theta) / d theta
};

double psi(const VectorRef& probe, const VectorRef& theta);

/// Value and parameter gradient of psi at every probe row. ReLU subgradient at 0 is 0.
PsiEval psi_eval(const MatrixRef& probes, const VectorRef& theta);

}  // namespace probe_net

/// k(theta, theta') = (1/B) sum_b psi(z_b, theta) psi(z_b, theta') over B probe
/// inputs; positive semidefinite by construction and bounded by 1.
class NetworkFeatureKernel final : public Kernel {
 public:
  explicit NetworkFeatureKernel(Matrix probes);

  double eval(const VectorRef& x, const VectorRef& y) const override;
  Vector grad1(const VectorRef& x, const VectorRef& y) const override;
  Matrix cross_hessian(const VectorRef& x, const VectorRef& y) const override;
  DerivativeStack derivative_stack(const VectorRef& x, const VectorRef& y) const override;
  int smooth_order(bool = false) const override { return 2; }

  bool has_feature_map() const override { return true; }
  Index feature_dim(Index input_dim) const override;
  Vector feature_map(const VectorRef& theta) const override;
  Matrix feature_jacobian(const VectorRef& theta) const override;

  const Matrix& probes() const { return probes_; }

 private:
  Matrix probes_;  // B x 50
  double inv_sqrt_b_;
};

/// Gram matrix K(i, j) = k(X.row(i), X.row(j)).
Matrix gram_matrix(const Kernel& kernel, const MatrixRef& X);

/// Cross Gram K(i, j) = k(X.row(i), Y.row(j)).
Matrix gram_matrix(const Kernel& kernel, const MatrixRef& X, const MatrixRef& Y);

}  // namespace srmmd
