#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"

#include "srmmd/stein.hpp"
#include "srmmd/targets.hpp"

using namespace srmmd;
using namespace srmmd::testutil;

namespace {

SteinKernel std_normal_stein(double sigma = 1.0, Index dim = 1) {
  auto mixture = std::make_shared<const GaussianMixture>(
      std::vector<double>{1.0}, std::vector<Vector>{Vector::Zero(dim)},
      std::vector<Matrix>{Matrix::Identity(dim, dim)});
  return SteinKernel(std::make_shared<GaussianKernel>(sigma), make_score_model(mixture));
}

// Independent reconstruction of the four-term Stein kernel from base kernel
// evaluations only, with all derivatives taken numerically.
double fd_stein_eval(const Kernel& base, const ScoreModel& score, const Vector& x, const Vector& y,
                     double h = 1e-6) {
  const Vector sx = score.score(x);
  const Vector sy = score.score(y);
  double value = sx.dot(sy) * base.eval(x, y);
  value += sx.dot(fd_grad2(base, x, y, h));
  value += fd_grad1(base, x, y, h).dot(sy);
  value += fd_cross_hessian(base, x, y, 1e-4).trace();
  return value;
}

}  // namespace

TEST_CASE("stein kernel diagonal values for the standard normal") {
  const SteinKernel k = std_normal_stein();
  const Vector zero = Vector::Zero(1);
  const Vector two = Vector::Constant(1, 2.0);
  CHECK(k.eval(zero, zero) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(k.eval(two, two) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("stein kernel symmetry") {
  const SteinKernel k = std_normal_stein(0.9, 2);
  RandomStream stream(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Vector x = stream.normal_vector(2);
    const Vector y = stream.normal_vector(2);
    CHECK(k.eval(x, y) == doctest::Approx(k.eval(y, x)).epsilon(1e-12));
  }
}

TEST_CASE("stein eval matches a finite-difference reconstruction of the four-term sum") {
  RandomStream stream(17);
  for (Index d : {1, 2}) {
    auto target = std::make_shared<const GaussianMixture>(
        std::vector<double>{1.0}, std::vector<Vector>{Vector::Zero(d)},
        std::vector<Matrix>{Matrix::Identity(d, d)});
    const auto base = std::make_shared<GaussianKernel>(1.0);
    const SteinKernel k(base, make_score_model(target));
    for (int rep = 0; rep < 20; ++rep) {
      const Vector x = random_points(stream, 1, d).row(0);
      const Vector y = random_points(stream, 1, d).row(0);
      const double expected = fd_stein_eval(*base, k.score_model(), x, y);
      const double actual = k.eval(x, y);
      CHECK(std::abs(actual - expected) / std::max(1.0, std::abs(expected)) < 1e-6);
    }
  }
}

TEST_CASE("stein derivative stack at the origin") {
  const SteinKernel k = std_normal_stein();
  const Vector zero = Vector::Zero(1);
  const DerivativeStack s = k.derivative_stack(zero, zero);
  CHECK(std::abs(s.grad1[0]) < 1e-14);
  // term contributions 1 (score outer product) + 1 + 1 (mixed) + 3 (trace term)
  CHECK(s.cross_hessian(0, 0) == doctest::Approx(6.0).epsilon(1e-12));

  const Matrix fd = fd_cross_hessian(k, zero, zero, 1e-4);
  CHECK(std::abs(fd(0, 0) - 6.0) < 1e-5);
}

TEST_CASE("stein derivative stack matches finite differences of stein_eval") {
  RandomStream stream(29);
  for (Index d : {1, 2}) {
    const SteinKernel k = std_normal_stein(1.1, d);
    for (int rep = 0; rep < 20; ++rep) {
      const Vector x = random_points(stream, 1, d).row(0);
      const Vector y = random_points(stream, 1, d).row(0);
      const DerivativeStack s = k.derivative_stack(x, y);
      CHECK(rel_error(s.grad1, fd_grad1(k, x, y, 1e-5)) < 1e-4);
      CHECK(rel_error(s.grad2, fd_grad2(k, x, y, 1e-5)) < 1e-4);
      CHECK(rel_error(s.cross_hessian, fd_cross_hessian(k, x, y, 1e-4)) < 1e-4);
      CHECK((s.grad2 - k.grad1(y, x)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  // also against a multimodal score with nonconstant Jacobian
  auto mixture = std::make_shared<const GaussianMixture>(four_gaussian_benchmark());
  const SteinKernel km(std::make_shared<GaussianKernel>(0.7), make_score_model(mixture));
  for (int rep = 0; rep < 20; ++rep) {
    const Vector x = random_points(stream, 1, 2).row(0);
    const Vector y = random_points(stream, 1, 2).row(0);
    const DerivativeStack s = km.derivative_stack(x, y);
    CHECK(rel_error(s.grad1, fd_grad1(km, x, y, 1e-5)) < 1e-4);
    CHECK(rel_error(s.cross_hessian, fd_cross_hessian(km, x, y, 1e-4)) < 1e-4);
  }
}

TEST_CASE("stein gram matrix is positive semidefinite") {
  RandomStream stream(31);
  const SteinKernel k = std_normal_stein(1.0, 2);
  for (int rep = 0; rep < 10; ++rep) {
    const Index n = 5 + static_cast<Index>(stream.uniform_below(16));
    const Matrix x = random_points(stream, n, 2);
    CHECK(min_eigenvalue(gram_matrix(k, x)) >= -1e-8);
  }
}

TEST_CASE("stein identity statistic") {
  auto mixture = std::make_shared<const GaussianMixture>(
      std::vector<double>{1.0}, std::vector<Vector>{Vector::Zero(1)}, std::vector<Matrix>{Matrix::Identity(1, 1)});
  const SteinKernel k(std::make_shared<GaussianKernel>(1.0), make_score_model(mixture));
  const TargetSampler sampler = [&](Index count, std::uint64_t seed) { return mixture->sample(count, seed); };

  const Vector y = Vector::Constant(1, 0.7);
  const auto stat = stein_identity_statistic(k, sampler, y, 100000, 99);
  CHECK(stat.standard_error_available);
  CHECK(std::abs(stat.mean) <= 4.0 * stat.standard_error);

  // degenerate sample size: mean only, standard error flagged unavailable
  const auto single = stein_identity_statistic(k, sampler, y, 1, 99);
  CHECK_FALSE(single.standard_error_available);
  CHECK_FALSE(single.passes());

  // Monte-Carlo rate: the standard error shrinks like M^(-1/2)
  const Vector origin = Vector::Zero(1);
  const auto s3 = stein_identity_statistic(k, sampler, origin, 1000, 7);
  const auto s4 = stein_identity_statistic(k, sampler, origin, 10000, 7);
  const auto s5 = stein_identity_statistic(k, sampler, origin, 100000, 7);
  CHECK(s4.standard_error / s5.standard_error > 2.0);
  CHECK(s4.standard_error / s5.standard_error < 5.0);
  CHECK(s3.standard_error / s4.standard_error > 2.0);
  CHECK(s3.standard_error / s4.standard_error < 5.0);
  CHECK(std::abs(s5.mean) < std::abs(s3.mean) + 4.0 * s3.standard_error);
}

TEST_CASE("growth diagnostics") {
  auto gaussian = std::make_shared<const GaussianMixture>(
      std::vector<double>{1.0}, std::vector<Vector>{Vector::Zero(2)}, std::vector<Matrix>{Matrix::Identity(2, 2)});
  const auto score = make_score_model(gaussian);
  const GrowthReport report = growth_diagnostics(*score, 10.0, 200);
  CHECK(report.score_ratio <= 1.0);                        // |x| / (1 + |x|) < 1
  CHECK(report.jacobian_ratio <= std::sqrt(2.0) + 1e-12);  // |J|_F = sqrt(d), constant
  CHECK(report.points_checked > 200);

  LabeledDataset data = make_synthetic_logistic(40, 3, 0.1, 8);
  auto posterior = std::make_shared<const LogisticPosterior>(data.features, data.labels, 1.0);
  const GrowthReport logistic_report = growth_diagnostics(*make_score_model(posterior), 5.0, 100);
  CHECK(std::isfinite(logistic_report.score_ratio));
  CHECK(std::isfinite(logistic_report.jacobian_ratio));
}

TEST_CASE("stein kernel capability errors") {
  auto mixture = std::make_shared<const GaussianMixture>(
      std::vector<double>{1.0}, std::vector<Vector>{Vector::Zero(2)}, std::vector<Matrix>{Matrix::Identity(2, 2)});
  const auto score = make_score_model(mixture);
  CHECK_THROWS_AS(SteinKernel(std::make_shared<RieszKernel>(1.0), score), CapabilityError);
  CHECK_THROWS_AS(SteinKernel(std::make_shared<PolynomialQuadraticKernel>(), score), CapabilityError);
}

TEST_CASE("score jacobian of the mixture matches finite differences of the score") {
  auto mixture = std::make_shared<const GaussianMixture>(four_gaussian_benchmark());
  const auto score = make_score_model(mixture);
  RandomStream stream(41);
  for (int rep = 0; rep < 10; ++rep) {
    const Vector x = random_points(stream, 1, 2, 3.0).row(0);
    const Matrix jac = score->score_jacobian(x);
    Matrix fd(2, 2);
    for (Index c = 0; c < 2; ++c) {
      fd.row(c) = fd_gradient([&](const Vector& z) { return score->score(z)[c]; }, x, 1e-5).transpose();
    }
    CHECK(rel_error(jac, fd) < 1e-5);
  }
}
