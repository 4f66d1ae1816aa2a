#include "srmmd/metrics.hpp"

#include <cmath>
#include <limits>

namespace srmmd {

namespace {

// Mean of the Gram matrix, with or without the diagonal; Stein kernels reuse one
// score evaluation per particle.
double gram_mean(const Kernel& kernel, const MatrixRef& x, bool include_diagonal) {
  const Index n = x.rows();
  const auto* stein = dynamic_cast<const SteinKernel*>(&kernel);
  std::vector<Vector> scores;
  if (stein != nullptr) {
    scores.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) scores.push_back(stein->score_model().score(x.row(i)));
  }
  const auto pair_value = [&](Index i, Index j) {
    if (stein != nullptr) {
      return stein->eval_cached(x.row(i), x.row(j), scores[static_cast<std::size_t>(i)],
                                scores[static_cast<std::size_t>(j)]);
    }
    return kernel.eval(x.row(i), x.row(j));
  };

  double off = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) off += pair_value(i, j);
  off *= 2.0;
  if (include_diagonal) {
    double diag = 0.0;
    for (Index i = 0; i < n; ++i) diag += pair_value(i, i);
    return (off + diag) / (static_cast<double>(n) * static_cast<double>(n));
  }
  if (n < 2) throw std::invalid_argument("U-statistic needs at least two particles");
  return off / (static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace

double mmd_squared(const Kernel& kernel, const MatrixRef& particles, const TargetRepresentation& target,
                   Estimator variant) {
  if (particles.rows() < 1) throw std::invalid_argument("mmd needs at least one particle");
  if (variant == Estimator::AnalyticCrossTerm) {
    throw std::invalid_argument("pass VStatistic or UStatistic; the analytic pathway is chosen by the target");
  }
  check_finite(particles, "particles");
  target.validate_kernel(kernel);
  const Index n = particles.rows();
  const bool use_u = variant == Estimator::UStatistic;
  if (use_u && n < 2) throw std::invalid_argument("U-statistic needs at least two particles");

  const double term_x = gram_mean(kernel, particles, /*include_diagonal=*/!use_u);

  double cross = 0.0;
  for (Index i = 0; i < n; ++i) cross += target.mean_embedding(kernel, particles.row(i));
  cross *= 2.0 / static_cast<double>(n);

  double term_y = 0.0;
  switch (target.kind()) {
    case TargetRepresentation::Kind::Stein:
      term_y = 0.0;  // cross term also vanished via mean_embedding = 0
      break;
    case TargetRepresentation::Kind::AnalyticGaussianMixture:
      term_y = target.embedding().double_integral();
      break;
    case TargetRepresentation::Kind::Empirical:
      term_y = use_u ? gram_mean(kernel, target.samples(), false) : target.double_integral(kernel);
      break;
  }
  return term_x - cross + term_y;
}

double ksd_squared(const SteinKernel& kernel, const MatrixRef& particles, Estimator variant) {
  if (particles.rows() < 1) throw std::invalid_argument("ksd needs at least one particle");
  if (variant == Estimator::AnalyticCrossTerm) {
    throw std::invalid_argument("ksd supports V- and U-statistics only");
  }
  check_finite(particles, "particles");
  return gram_mean(kernel, particles, variant == Estimator::VStatistic);
}

std::vector<Index> solve_assignment(const Matrix& cost) {
  const Index n = cost.rows();
  if (cost.cols() != n || n < 1) throw std::invalid_argument("assignment needs a square nonempty cost matrix");
  check_finite(cost, "cost matrix");
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Shortest-augmenting-path with dual potentials; column n is the virtual root.
  std::vector<double> u(static_cast<std::size_t>(n), 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<Index> col_to_row(static_cast<std::size_t>(n) + 1, -1);
  std::vector<Index> way(static_cast<std::size_t>(n) + 1, n);

  for (Index i = 0; i < n; ++i) {
    Index j0 = n;
    col_to_row[static_cast<std::size_t>(n)] = i;
    std::vector<double> min_reduced(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = col_to_row[static_cast<std::size_t>(j0)];
      double delta = kInf;
      Index j1 = n;
      for (Index j = 0; j < n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double reduced = cost(i0, j) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (reduced < min_reduced[static_cast<std::size_t>(j)]) {
          min_reduced[static_cast<std::size_t>(j)] = reduced;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (min_reduced[static_cast<std::size_t>(j)] < delta) {
          delta = min_reduced[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          if (col_to_row[static_cast<std::size_t>(j)] >= 0) u[static_cast<std::size_t>(col_to_row[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          min_reduced[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (col_to_row[static_cast<std::size_t>(j0)] != -1);
    // Augment along the alternating path back to the root.
    while (j0 != n) {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      col_to_row[static_cast<std::size_t>(j0)] = col_to_row[static_cast<std::size_t>(j1)];
      j0 = j1;
    }
  }

  std::vector<Index> row_to_col(static_cast<std::size_t>(n), -1);
  for (Index j = 0; j < n; ++j) {
    if (col_to_row[static_cast<std::size_t>(j)] >= 0) {
      row_to_col[static_cast<std::size_t>(col_to_row[static_cast<std::size_t>(j)])] = j;
    }
  }
  return row_to_col;
}

double w2_exact(const MatrixRef& x, const MatrixRef& y) {
  if (x.rows() != y.rows()) throw std::invalid_argument("w2_exact needs equal-size point sets");
  if (x.cols() != y.cols()) throw std::invalid_argument("w2_exact needs matching dimensions");
  if (x.rows() > 2000) throw std::invalid_argument("w2_exact is limited to N <= 2000 point sets");
  check_finite(x, "x");
  check_finite(y, "y");
  const Index n = x.rows();
  Matrix cost(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) cost(i, j) = (x.row(i) - y.row(j)).squaredNorm();
  const std::vector<Index> assignment = solve_assignment(cost);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += cost(i, assignment[static_cast<std::size_t>(i)]);
  return std::sqrt(total / static_cast<double>(n));
}

}  // namespace srmmd
