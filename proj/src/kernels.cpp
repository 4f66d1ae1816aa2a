#include "srmmd/kernels.hpp"

#include <cmath>

namespace srmmd {

void Kernel::check_pair(const VectorRef& x, const VectorRef& y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("kernel arguments must have equal dimension, got " +
                                std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  check_finite(x, "kernel argument x");
  check_finite(y, "kernel argument y");
}

DerivativeStack Kernel::derivative_stack(const VectorRef& x, const VectorRef& y) const {
  DerivativeStack s;
  s.value = eval(x, y);
  s.grad1 = grad1(x, y);
  s.grad2 = grad2(x, y);
  s.cross_hessian = cross_hessian(x, y);
  return s;
}

std::vector<double> Kernel::profile_derivatives(double, int) const {
  throw CapabilityError("kernel has no radial profile");
}

void Kernel::profile_derivatives_into(double u, int max_order, double* out) const {
  const std::vector<double> d = profile_derivatives(u, max_order);
  for (int j = 0; j <= max_order; ++j) out[j] = d[static_cast<std::size_t>(j)];
}

Index Kernel::feature_dim(Index) const {
  throw CapabilityError("kernel has no finite-dimensional feature map");
}

Vector Kernel::feature_map(const VectorRef&) const {
  throw CapabilityError("kernel has no finite-dimensional feature map");
}

Matrix Kernel::feature_jacobian(const VectorRef&) const {
  throw CapabilityError("kernel has no finite-dimensional feature map");
}

// ---------------------------------------------------------------------------
// Gaussian
// ---------------------------------------------------------------------------

GaussianKernel::GaussianKernel(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("Gaussian lengthscale must be positive and finite");
  }
  slope_ = -1.0 / (2.0 * sigma * sigma);
}

std::vector<double> GaussianKernel::profile_derivatives(double u, int max_order) const {
  std::vector<double> d(static_cast<std::size_t>(max_order < 0 ? 0 : max_order) + 1);
  profile_derivatives_into(u, max_order, d.data());
  return d;
}

void GaussianKernel::profile_derivatives_into(double u, int max_order, double* out) const {
  if (max_order < 0 || max_order > 4) {
    throw CapabilityError("Gaussian profile derivatives available up to order 4");
  }
  if (!(u >= 0.0) || !std::isfinite(u)) {
    throw std::invalid_argument("profile argument u must be finite and nonnegative");
  }
  out[0] = std::exp(slope_ * u);
  for (int j = 1; j <= max_order; ++j) out[j] = slope_ * out[j - 1];
}

double GaussianKernel::eval(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  return std::exp(slope_ * (x - y).squaredNorm());
}

Vector GaussianKernel::grad1(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  const Vector delta = x - y;
  const double psi1 = slope_ * std::exp(slope_ * delta.squaredNorm());
  return 2.0 * psi1 * delta;
}

Matrix GaussianKernel::cross_hessian(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  const Vector delta = x - y;
  const double psi0 = std::exp(slope_ * delta.squaredNorm());
  const double psi1 = slope_ * psi0;
  const double psi2 = slope_ * psi1;
  Matrix h = (-4.0 * psi2) * (delta * delta.transpose());
  h.diagonal().array() += -2.0 * psi1;
  return h;
}

DerivativeStack GaussianKernel::derivative_stack(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  const Vector delta = x - y;
  const double psi0 = std::exp(slope_ * delta.squaredNorm());
  const double psi1 = slope_ * psi0;
  const double psi2 = slope_ * psi1;
  DerivativeStack s;
  s.value = psi0;
  s.grad1 = (2.0 * psi1) * delta;
  s.grad2 = -s.grad1;
  s.cross_hessian = (-4.0 * psi2) * (delta * delta.transpose());
  s.cross_hessian.diagonal().array() += -2.0 * psi1;
  return s;
}

// ---------------------------------------------------------------------------
// Polynomial quadratic
// ---------------------------------------------------------------------------

PolynomialQuadraticKernel::PolynomialQuadraticKernel(double offset) : offset_(offset) {
  if (!(offset > 0.0) || !std::isfinite(offset)) {
    throw std::invalid_argument("polynomial offset must be positive and finite");
  }
}

double PolynomialQuadraticKernel::eval(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  const double b = x.dot(y) + offset_;
  return b * b;
}

Vector PolynomialQuadraticKernel::grad1(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  return 2.0 * (x.dot(y) + offset_) * y;
}

Matrix PolynomialQuadraticKernel::cross_hessian(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  Matrix h = 2.0 * (y * x.transpose());
  h.diagonal().array() += 2.0 * (x.dot(y) + offset_);
  return h;
}

Index PolynomialQuadraticKernel::feature_dim(Index d) const { return 1 + d + d * (d + 1) / 2; }

Vector PolynomialQuadraticKernel::feature_map(const VectorRef& x) const {
  const Index d = x.size();
  Vector phi(feature_dim(d));
  const double sqrt2 = std::sqrt(2.0);
  phi[0] = offset_;
  phi.segment(1, d) = std::sqrt(2.0 * offset_) * x;
  Index p = 1 + d;
  for (Index i = 0; i < d; ++i) phi[p++] = x[i] * x[i];
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j) phi[p++] = sqrt2 * x[i] * x[j];
  return phi;
}

Matrix PolynomialQuadraticKernel::feature_jacobian(const VectorRef& x) const {
  const Index d = x.size();
  Matrix jac = Matrix::Zero(feature_dim(d), d);
  const double sqrt2 = std::sqrt(2.0);
  jac.block(1, 0, d, d).diagonal().setConstant(std::sqrt(2.0 * offset_));
  Index p = 1 + d;
  for (Index i = 0; i < d; ++i) jac(p++, i) = 2.0 * x[i];
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j) {
      jac(p, i) = sqrt2 * x[j];
      jac(p, j) = sqrt2 * x[i];
      ++p;
    }
  return jac;
}

// ---------------------------------------------------------------------------
// Riesz
// ---------------------------------------------------------------------------

RieszKernel::RieszKernel(double exponent) : exponent_(exponent) {
  if (!(exponent > 0.0) || !(exponent <= 2.0)) {
    throw std::invalid_argument("Riesz exponent must lie in (0, 2]");
  }
}

std::vector<double> RieszKernel::profile_derivatives(double t, int max_order) const {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw std::invalid_argument("profile argument t must be finite and nonnegative");
  }
  const int available = smooth_order(t == 0.0);
  if (max_order < 0 || max_order > available) {
    throw CapabilityError("Riesz profile derivatives available up to order " + std::to_string(available) +
                          (t == 0.0 ? " on the diagonal" : " off the diagonal"));
  }
  std::vector<double> d(static_cast<std::size_t>(max_order) + 1);
  d[0] = -std::pow(t, exponent_);
  if (max_order >= 1) d[1] = -exponent_ * std::pow(t, exponent_ - 1.0);
  return d;
}

double RieszKernel::eval(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  return -std::pow((x - y).norm(), exponent_);
}

Vector RieszKernel::grad1(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  const Vector delta = x - y;
  const double t = delta.norm();
  if (t == 0.0) return Vector::Zero(x.size());  // subgradient convention
  return (-exponent_ * std::pow(t, exponent_ - 2.0)) * delta;
}

Matrix RieszKernel::cross_hessian(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  const Vector delta = x - y;
  const double t = delta.norm();
  if (t == 0.0) {
    throw SingularityError("Riesz cross-Hessian is singular at x = y");
  }
  Matrix h = (exponent_ * (exponent_ - 2.0) * std::pow(t, exponent_ - 4.0)) * (delta * delta.transpose());
  h.diagonal().array() += exponent_ * std::pow(t, exponent_ - 2.0);
  return h;
}

// ---------------------------------------------------------------------------
// Probe network and feature-map kernel
// ---------------------------------------------------------------------------

namespace probe_net {

namespace {

inline double output_gain(double a) { return std::exp(-0.25 * a * a); }

void check_theta(const VectorRef& theta) {
  if (theta.size() != kThetaDim) {
    throw std::invalid_argument("network parameter vector must have " + std::to_string(kThetaDim) +
                                " entries (b1, w1, b0, w0), got " + std::to_string(theta.size()));
  }
  check_finite(theta, "network parameters");
}

}  // namespace

double psi(const VectorRef& probe, const VectorRef& theta) {
  check_theta(theta);
  if (probe.size() != kProbeDim) {
    throw std::invalid_argument("probe input must have " + std::to_string(kProbeDim) + " entries");
  }
  const double pre = theta.tail(kProbeDim).dot(probe) + theta[2];
  const double hidden = pre > 0.0 ? pre : 0.0;
  return output_gain(theta[0] + theta[1] * hidden);
}

PsiEval psi_eval(const MatrixRef& probes, const VectorRef& theta) {
  check_theta(theta);
  if (probes.cols() != kProbeDim) {
    throw std::invalid_argument("probe inputs must have " + std::to_string(kProbeDim) + " columns");
  }
  const Index b_count = probes.rows();
  const double b1 = theta[0];
  const double w1 = theta[1];
  const double b0 = theta[2];
  const auto w0 = theta.tail(kProbeDim);

  PsiEval out;
  out.psi.resize(b_count);
  out.jacobian = Matrix::Zero(kThetaDim, b_count);
  for (Index b = 0; b < b_count; ++b) {
    const double pre = probes.row(b).dot(w0) + b0;
    const double gate = pre > 0.0 ? 1.0 : 0.0;  // ReLU subgradient at 0 is 0
    const double hidden = gate * pre;
    const double a = b1 + w1 * hidden;
    const double value = output_gain(a);
    const double dvalue = -0.5 * a * value;
    out.psi[b] = value;
    out.jacobian(0, b) = dvalue;
    out.jacobian(1, b) = dvalue * hidden;
    const double chain = dvalue * w1 * gate;
    out.jacobian(2, b) = chain;
    if (chain != 0.0) out.jacobian.col(b).tail(kProbeDim) = chain * probes.row(b).transpose();
  }
  return out;
}

}  // namespace probe_net

NetworkFeatureKernel::NetworkFeatureKernel(Matrix probes) : probes_(std::move(probes)) {
  if (probes_.rows() < 1 || probes_.cols() != probe_net::kProbeDim) {
    throw std::invalid_argument("feature kernel needs a nonempty B x 50 probe matrix");
  }
  check_finite(probes_, "probe matrix");
  inv_sqrt_b_ = 1.0 / std::sqrt(static_cast<double>(probes_.rows()));
}

Index NetworkFeatureKernel::feature_dim(Index) const { return probes_.rows(); }

Vector NetworkFeatureKernel::feature_map(const VectorRef& theta) const {
  return inv_sqrt_b_ * probe_net::psi_eval(probes_, theta).psi;
}

Matrix NetworkFeatureKernel::feature_jacobian(const VectorRef& theta) const {
  return inv_sqrt_b_ * probe_net::psi_eval(probes_, theta).jacobian.transpose();
}

double NetworkFeatureKernel::eval(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  return feature_map(x).dot(feature_map(y));
}

Vector NetworkFeatureKernel::grad1(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  return feature_jacobian(x).transpose() * feature_map(y);
}

Matrix NetworkFeatureKernel::cross_hessian(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  return feature_jacobian(x).transpose() * feature_jacobian(y);
}

DerivativeStack NetworkFeatureKernel::derivative_stack(const VectorRef& x, const VectorRef& y) const {
  check_pair(x, y);
  const auto ex = probe_net::psi_eval(probes_, x);
  const auto ey = probe_net::psi_eval(probes_, y);
  const double inv_b = inv_sqrt_b_ * inv_sqrt_b_;
  DerivativeStack s;
  s.value = inv_b * ex.psi.dot(ey.psi);
  s.grad1 = inv_b * (ex.jacobian * ey.psi);
  s.grad2 = inv_b * (ey.jacobian * ex.psi);
  s.cross_hessian = inv_b * (ex.jacobian * ey.jacobian.transpose());
  return s;
}

// ---------------------------------------------------------------------------

Matrix gram_matrix(const Kernel& kernel, const MatrixRef& X) {
  const Index n = X.rows();
  Matrix k(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      k(i, j) = kernel.eval(X.row(i), X.row(j));
      k(j, i) = k(i, j);
    }
  }
  return k;
}

Matrix gram_matrix(const Kernel& kernel, const MatrixRef& X, const MatrixRef& Y) {
  Matrix k(X.rows(), Y.rows());
  for (Index i = 0; i < X.rows(); ++i)
    for (Index j = 0; j < Y.rows(); ++j) k(i, j) = kernel.eval(X.row(i), Y.row(j));
  return k;
}

}  // namespace srmmd
