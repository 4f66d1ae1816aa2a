#pragma once

#include "srmmd/stein.hpp"
#include "srmmd/targets.hpp"

#include <string>
#include <vector>

namespace srmmd {

enum class Estimator { VStatistic, UStatistic, AnalyticCrossTerm };

struct MetricReport {
  std::string name;
  double value = 0.0;
  Estimator estimator = Estimator::VStatistic;
};

/// Squared maximum mean discrepancy between the particle set and the target.
/// V-statistic by default; the analytic Gaussian-mixture pathway replaces the
/// cross and target terms with closed-form embedding evaluations. Under a Stein
/// target both vanish and the value equals ksd_squared.
double mmd_squared(const Kernel& kernel, const MatrixRef& particles, const TargetRepresentation& target,
                   Estimator variant = Estimator::VStatistic);

/// Squared kernel Stein discrepancy: the mean of the Stein kernel Gram matrix.
double ksd_squared(const SteinKernel& kernel, const MatrixRef& particles,
                   Estimator variant = Estimator::VStatistic);

/// Minimum-cost perfect matching on a square cost matrix (Jonker-Volgenant class
/// shortest augmenting path, O(n^3)). Returns the column assigned to each row.
std::vector<Index> solve_assignment(const Matrix& cost);

/// Exact Wasserstein-2 distance between equal-size uniform point sets:
/// sqrt(min over permutations of (1/N) sum |x_i - y_perm(i)|^2).
double w2_exact(const MatrixRef& x, const MatrixRef& y);

}  // namespace srmmd
