#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace srmmd {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;
using MatrixRef = Eigen::Ref<const Eigen::MatrixXd>;

/// Requested derivative order (or feature map) is not available for this kernel.
class CapabilityError : public std::runtime_error {
 public:
  explicit CapabilityError(const std::string& what) : std::runtime_error(what) {}
};

/// Evaluation at a point where the kernel derivative does not exist (Riesz diagonal).
class SingularityError : public std::runtime_error {
 public:
  explicit SingularityError(const std::string& what) : std::runtime_error(what) {}
};

/// A linear solve failed even after jitter escalation, or a residual check failed.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid combination of flow kind, kernel, and target representation.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A particle position became non-finite during a flow.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long step, Matrix last_positions)
      : std::runtime_error(what), step(step), last_positions(std::move(last_positions)) {}

  long step;
  Matrix last_positions;  // last fully finite ensemble
};

inline void check_finite(const MatrixRef& m, const char* name) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(name) + " contains non-finite entries");
  }
}

}  // namespace srmmd
