#include "srmmd/stein.hpp"

#include "srmmd/rng.hpp"

#include <cmath>

namespace srmmd {

namespace {

// Trace term g(u) = sum_l d1_l d2_l k = -2 d psi1 - 4 u psi2 for radial kernels,
// together with the derivatives in u needed by the Stein stack.
struct TraceTerm {
  double g, g1, g2;
};

TraceTerm trace_term(double d, double u, const double* psi) {
  TraceTerm t;
  t.g = -2.0 * d * psi[1] - 4.0 * u * psi[2];
  t.g1 = -(2.0 * d + 4.0) * psi[2] - 4.0 * u * psi[3];
  t.g2 = -(2.0 * d + 8.0) * psi[3] - 4.0 * u * psi[4];
  return t;
}

}  // namespace

SteinKernel::SteinKernel(std::shared_ptr<const Kernel> base, std::shared_ptr<const ScoreModel> score)
    : base_(std::move(base)), score_(std::move(score)) {
  if (!base_ || !score_) throw std::invalid_argument("Stein kernel needs a base kernel and a score model");
  if (!base_->is_radial_smooth()) {
    throw CapabilityError("Stein kernel requires a smooth radial base kernel");
  }
  if (base_->smooth_order() < 2) {
    throw CapabilityError("Stein kernel requires base derivatives up to order 2");
  }
}

double SteinKernel::eval_cached(const VectorRef& x, const VectorRef& y, const VectorRef& sx,
                                const VectorRef& sy) const {
  const double u = (x - y).squaredNorm();
  double psi[3];
  base_->profile_derivatives_into(u, 2, psi);
  const double d = static_cast<double>(x.size());
  // s(x).s(y) k + 2 psi1 delta.(s(y) - s(x)) + trace term
  return sx.dot(sy) * psi[0] + 2.0 * psi[1] * (x - y).dot(sy - sx) - 2.0 * d * psi[1] - 4.0 * u * psi[2];
}

double SteinKernel::eval(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  return eval_cached(x, y, score_->score(x), score_->score(y));
}

Vector SteinKernel::grad1(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  if (base_->smooth_order() < 3) {
    throw CapabilityError("Stein kernel gradient requires base derivatives up to order 3");
  }
  const Vector delta = x - y;
  const double u = delta.squaredNorm();
  const auto psi = base_->profile_derivatives(u, 3);
  const double d = static_cast<double>(x.size());
  const Vector sx = score_->score(x);
  const Vector sy = score_->score(y);
  const Matrix jx = score_->score_jacobian(x);

  const double g1 = -(2.0 * d + 4.0) * psi[2] - 4.0 * u * psi[3];
  const Vector diff = sx - sy;
  Vector g = psi[0] * (jx.transpose() * sy);
  g.noalias() += (-2.0 * psi[1]) * (jx.transpose() * delta);
  g += (2.0 * psi[1] * sx.dot(sy)) * delta;
  g += (-2.0 * psi[1]) * diff - (4.0 * psi[2] * delta.dot(diff)) * delta;  // cross-hessian of base applied to (sx - sy)
  g += (2.0 * g1) * delta;
  return g;
}

namespace {

// One source of truth for the Stein stack; instantiated with fixed-size types
// for d = 2, stack-allocated max-size-8 temporaries for low dimensions, and
// heap vectors otherwise. WithCross toggles the mixed-second-derivative block,
// which the KSD flow does not need.
template <bool WithCross, typename Vec, typename Mat, typename XT, typename ST, typename JT, typename G1,
          typename G2, typename CH>
inline void stein_stack_impl(const Kernel& base, const XT& x, const XT& y, const ST& sx, const ST& sy,
                             const JT& jx, const JT& jy, double& value, G1& grad1_out, G2& grad2_out,
                             CH* cross_out) {
  const Index d = x.size();
  const Vec delta = x - y;
  const double u = delta.squaredNorm();
  double psi[5];
  base.profile_derivatives_into(u, 4, psi);
  const TraceTerm t = trace_term(static_cast<double>(d), u, psi);

  const double sxy = sx.dot(sy);
  const double sx_delta = sx.dot(delta);
  const double sy_delta = sy.dot(delta);
  const double delta_diff = sx_delta - sy_delta;
  const Vec diff = sx - sy;
  const Vec jxt_sy = jx.transpose() * sy;
  const Vec jyt_sx = jy.transpose() * sx;
  const Vec jxt_delta = jx.transpose() * delta;
  const Vec jyt_delta = jy.transpose() * delta;  // (delta^T Jy)^T

  value = sxy * psi[0] + 2.0 * psi[1] * (sy_delta - sx_delta) + t.g;

  // grad1 = psi0 Jx^T sy - 2 psi1 Jx^T delta + 2 psi1 (sx.sy) delta
  //         + C (sx - sy) + 2 g' delta, with C = -2 psi1 I - 4 psi2 delta delta^T.
  grad1_out = psi[0] * jxt_sy + (-2.0 * psi[1]) * jxt_delta +
              (2.0 * psi[1] * sxy + 2.0 * t.g1 - 4.0 * psi[2] * delta_diff) * delta + (-2.0 * psi[1]) * diff;

  // grad2 by the swapped-argument symmetry (delta -> -delta, x <-> y).
  grad2_out = psi[0] * jyt_sx + (2.0 * psi[1]) * jyt_delta +
              (-2.0 * psi[1] * sxy - 2.0 * t.g1 + 4.0 * psi[2] * delta_diff) * delta + (2.0 * psi[1]) * diff;

  if constexpr (WithCross) {
    Mat cross = psi[0] * (jx.transpose() * jy).eval();
    cross.noalias() += (-2.0 * psi[1]) * (jxt_sy * delta.transpose());
    cross.noalias() += (2.0 * psi[1]) * (delta * jyt_sx.transpose());
    cross.noalias() +=
        (-4.0 * sxy * psi[2] - 4.0 * t.g2 + 8.0 * psi[3] * delta_diff) * (delta * delta.transpose());
    cross += (2.0 * psi[1]) * (jx.transpose() + jy);
    cross.noalias() += (4.0 * psi[2]) * (jxt_delta * delta.transpose());
    cross.noalias() += (4.0 * psi[2]) * (delta * jyt_delta.transpose());
    cross.noalias() += (4.0 * psi[2]) * (delta * diff.transpose());
    cross.noalias() += (4.0 * psi[2]) * (diff * delta.transpose());
    cross.diagonal().array() += -2.0 * sxy * psi[1] + 4.0 * psi[2] * delta_diff - 2.0 * t.g1;
    *cross_out = cross;
  }
}

constexpr Index kSmallDim = 8;
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kSmallDim, 1>;
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kSmallDim, kSmallDim>;

}  // namespace

void SteinKernel::stack_into(const VectorRef& x, const VectorRef& y, const VectorRef& sx, const VectorRef& sy,
                             const MatrixRef& jx, const MatrixRef& jy, double& value,
                             Eigen::Ref<Vector> grad1_out, Eigen::Ref<Vector> grad2_out,
                             Eigen::Ref<Matrix> cross_out) const {
  if (base_->smooth_order() < 4) {
    throw CapabilityError("Stein derivative stack requires base derivatives up to order 4");
  }
  if (x.size() == 2) {
    // fixed-size instantiation: everything unrolls, no dynamic dispatch
    const Eigen::Vector2d xf = x, yf = y, sxf = sx, syf = sy;
    const Eigen::Matrix2d jxf = jx, jyf = jy;
    Eigen::Vector2d g1, g2;
    Eigen::Matrix2d ch;
    stein_stack_impl<true, Eigen::Vector2d, Eigen::Matrix2d>(*base_, xf, yf, sxf, syf, jxf, jyf, value, g1, g2,
                                                             &ch);
    grad1_out = g1;
    grad2_out = g2;
    cross_out = ch;
  } else if (x.size() <= kSmallDim) {
    stein_stack_impl<true, SmallVec, SmallMat>(*base_, x, y, sx, sy, jx, jy, value, grad1_out, grad2_out,
                                               &cross_out);
  } else {
    stein_stack_impl<true, Vector, Matrix>(*base_, x, y, sx, sy, jx, jy, value, grad1_out, grad2_out,
                                           &cross_out);
  }
}

void SteinKernel::grads_into(const VectorRef& x, const VectorRef& y, const VectorRef& sx, const VectorRef& sy,
                             const MatrixRef& jx, const MatrixRef& jy, Eigen::Ref<Vector> grad1_out,
                             Eigen::Ref<Vector> grad2_out) const {
  if (base_->smooth_order() < 4) {
    throw CapabilityError("Stein derivative stack requires base derivatives up to order 4");
  }
  double value = 0.0;
  if (x.size() == 2) {
    const Eigen::Vector2d xf = x, yf = y, sxf = sx, syf = sy;
    const Eigen::Matrix2d jxf = jx, jyf = jy;
    Eigen::Vector2d g1, g2;
    Eigen::Matrix2d* no_cross = nullptr;
    stein_stack_impl<false, Eigen::Vector2d, Eigen::Matrix2d>(*base_, xf, yf, sxf, syf, jxf, jyf, value, g1, g2,
                                                              no_cross);
    grad1_out = g1;
    grad2_out = g2;
  } else if (x.size() <= kSmallDim) {
    SmallMat* no_cross = nullptr;
    stein_stack_impl<false, SmallVec, SmallMat>(*base_, x, y, sx, sy, jx, jy, value, grad1_out, grad2_out,
                                                no_cross);
  } else {
    Matrix* no_cross = nullptr;
    stein_stack_impl<false, Vector, Matrix>(*base_, x, y, sx, sy, jx, jy, value, grad1_out, grad2_out,
                                            no_cross);
  }
}

DerivativeStack SteinKernel::derivative_stack_cached(const VectorRef& x, const VectorRef& y, const VectorRef& sx,
                                                     const VectorRef& sy, const MatrixRef& jx,
                                                     const MatrixRef& jy) const {
  const Index d = x.size();
  DerivativeStack s;
  s.grad1.resize(d);
  s.grad2.resize(d);
  s.cross_hessian.resize(d, d);
  stack_into(x, y, sx, sy, jx, jy, s.value, s.grad1, s.grad2, s.cross_hessian);
  return s;
}

DerivativeStack SteinKernel::derivative_stack(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  return derivative_stack_cached(x, y, score_->score(x), score_->score(y), score_->score_jacobian(x),
                                 score_->score_jacobian(y));
}

Matrix SteinKernel::cross_hessian(const VectorRef& x, const VectorRef& y) const {
  return derivative_stack(x, y).cross_hessian;
}

SteinIdentityStat stein_identity_statistic(const SteinKernel& kernel, const TargetSampler& sampler,
                                           const VectorRef& y, Index sample_count, std::uint64_t seed) {
  if (sample_count < 1) throw std::invalid_argument("stein identity statistic needs at least one sample");
  const Matrix draws = sampler(sample_count, seed);
  if (draws.rows() != sample_count || draws.cols() != y.size()) {
    throw std::invalid_argument("sampler returned a matrix of unexpected shape");
  }
  const Vector sy = kernel.score_model().score(y);

  double mean = 0.0;
  double m2 = 0.0;  // Welford
  for (Index i = 0; i < sample_count; ++i) {
    const Vector xi = draws.row(i);
    const double v = kernel.eval_cached(xi, y, kernel.score_model().score(xi), sy);
    const double d1 = v - mean;
    mean += d1 / static_cast<double>(i + 1);
    m2 += d1 * (v - mean);
  }

  SteinIdentityStat stat;
  stat.mean = mean;
  stat.sample_count = sample_count;
  if (sample_count >= 2) {
    const double var = m2 / static_cast<double>(sample_count - 1);
    stat.standard_error = std::sqrt(var / static_cast<double>(sample_count));
    stat.standard_error_available = true;
  }
  return stat;
}

GrowthReport growth_diagnostics(const ScoreModel& score, double radius, Index grid_size) {
  if (!(radius > 0.0)) throw std::invalid_argument("growth diagnostics need a positive radius");
  const Index d = score.dim();
  GrowthReport report;
  report.score_argmax = Vector::Zero(d);
  report.jacobian_argmax = Vector::Zero(d);

  RandomStream stream(derive_seed(0x5D1A6ULL, "growth-grid"));
  const auto probe = [&](const Vector& x) {
    const double denom = 1.0 + x.norm();
    const double sr = score.score(x).norm() / denom;
    const double jr = score.score_jacobian(x).norm() / denom;
    if (sr > report.score_ratio) {
      report.score_ratio = sr;
      report.score_argmax = x;
    }
    if (jr > report.jacobian_ratio) {
      report.jacobian_ratio = jr;
      report.jacobian_argmax = x;
    }
    ++report.points_checked;
  };

  probe(Vector::Zero(d));
  for (Index i = 0; i < d; ++i) {
    Vector axis = Vector::Zero(d);
    axis[i] = radius;
    probe(axis);
    probe(-axis);
  }
  for (Index i = 0; i < grid_size; ++i) {
    Vector dir = stream.normal_vector(d);
    const double norm = dir.norm();
    if (norm == 0.0) continue;
    const double r = radius * std::pow(stream.uniform(), 1.0 / static_cast<double>(d));
    probe(Vector((r / norm) * dir));
  }
  return report;
}

}  // namespace srmmd
