#pragma once

#include "srmmd/kernels.hpp"

#include <cstdint>
#include <functional>
#include <memory>

namespace srmmd {

/// Score s(x) = grad log pi(x) of an unnormalized target, with Jacobian.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual Index dim() const = 0;
  virtual Vector score(const VectorRef& x) const = 0;
  virtual Matrix score_jacobian(const VectorRef& x) const = 0;
};

/// Langevin Stein kernel
///   k_pi(x, y) = s(x).s(y) k(x, y) + s(x).grad2 k(x, y) + grad1 k(x, y).s(y)
///              + sum_l d1_l d2_l k(x, y)
/// built from a smooth radial base kernel. Its own first and mixed-second
/// derivatives are assembled from base profile derivatives up to order four and
/// score derivatives up to the Jacobian.
class SteinKernel final : public Kernel {
 public:
  SteinKernel(std::shared_ptr<const Kernel> base, std::shared_ptr<const ScoreModel> score);

  double eval(const VectorRef& x, const VectorRef& y) const override;
  Vector grad1(const VectorRef& x, const VectorRef& y) const override;
  Matrix cross_hessian(const VectorRef& x, const VectorRef& y) const override;
  DerivativeStack derivative_stack(const VectorRef& x, const VectorRef& y) const override;
  int smooth_order(bool = false) const override { return 2; }

  const Kernel& base() const { return *base_; }
  const ScoreModel& score_model() const { return *score_; }

  /// Stack with score values/Jacobians supplied by the caller; lets Gram assembly
  /// reuse one score evaluation per particle.
  DerivativeStack derivative_stack_cached(const VectorRef& x, const VectorRef& y, const VectorRef& sx,
                                          const VectorRef& sy, const MatrixRef& jx, const MatrixRef& jy) const;
  double eval_cached(const VectorRef& x, const VectorRef& y, const VectorRef& sx, const VectorRef& sy) const;

  /// Writes the stack into caller-provided storage (Gram blocks). Dimensions up
  /// to 8 run on stack-allocated temporaries with no heap traffic.
  void stack_into(const VectorRef& x, const VectorRef& y, const VectorRef& sx, const VectorRef& sy,
                  const MatrixRef& jx, const MatrixRef& jy, double& value, Eigen::Ref<Vector> grad1_out,
                  Eigen::Ref<Vector> grad2_out, Eigen::Ref<Matrix> cross_out) const;

  /// First derivatives only; what the KSD flow needs per particle pair.
  void grads_into(const VectorRef& x, const VectorRef& y, const VectorRef& sx, const VectorRef& sy,
                  const MatrixRef& jx, const MatrixRef& jy, Eigen::Ref<Vector> grad1_out,
                  Eigen::Ref<Vector> grad2_out) const;

 private:
  std::shared_ptr<const Kernel> base_;
  std::shared_ptr<const ScoreModel> score_;
};

/// Monte-Carlo estimate of E_{X~pi}[k_pi(X, y)], which is zero in expectation by
/// the Stein identity. Used as a statistical self-test.
struct SteinIdentityStat {
  double mean = 0.0;
  double standard_error = 0.0;
  bool standard_error_available = false;
  Index sample_count = 0;

  bool passes(double z = 4.0) const { return standard_error_available && std::abs(mean) <= z * standard_error; }
};

using TargetSampler = std::function<Matrix(Index count, std::uint64_t seed)>;

SteinIdentityStat stein_identity_statistic(const SteinKernel& kernel, const TargetSampler& sampler,
                                           const VectorRef& y, Index sample_count, std::uint64_t seed);

/// Empirical check of the linear-growth conditions |s(x)| <= M0 (1 + |x|) and
/// |J s(x)|_F <= M0 (1 + |x|) over a ball; advisory only.
struct GrowthReport {
  double score_ratio = 0.0;
  double jacobian_ratio = 0.0;
  Vector score_argmax;
  Vector jacobian_argmax;
  Index points_checked = 0;
};

GrowthReport growth_diagnostics(const ScoreModel& score, double radius, Index grid_size);

}  // namespace srmmd
