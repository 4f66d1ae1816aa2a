#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"

#include "srmmd/flows.hpp"

using namespace srmmd;
using namespace srmmd::testutil;

namespace {

std::shared_ptr<const GaussianMixture> std_normal(Index dim) {
  return std::make_shared<const GaussianMixture>(std::vector<double>{1.0},
                                                 std::vector<Vector>{Vector::Zero(dim)},
                                                 std::vector<Matrix>{Matrix::Identity(dim, dim)});
}

FlowConfig basic_config(FlowKind kind, double gamma = 0.1, double lambda = 0.1) {
  FlowConfig c;
  c.kind = kind;
  c.gamma = gamma;
  c.lambda = lambda;
  c.metric_cadence = 10;
  return c;
}

}  // namespace

TEST_CASE("flow_step identities") {
  ParticleEnsemble e;
  e.positions = Matrix::Zero(3, 2);
  const Matrix zero_field = Matrix::Zero(3, 2);
  const ParticleEnsemble unchanged = flow_step(e, zero_field, 0.1);
  CHECK((unchanged.positions - e.positions).cwiseAbs().maxCoeff() == 0.0);
  CHECK(unchanged.step == 1);

  Matrix field(1, 2);
  field << 1.0, -2.0;
  ParticleEnsemble single;
  single.positions = Matrix::Zero(1, 2);
  const ParticleEnsemble moved = flow_step(single, field, 0.1);
  CHECK(moved.positions(0, 0) == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(moved.positions(0, 1) == doctest::Approx(0.2).epsilon(1e-15));

  const ParticleEnsemble frozen = flow_step(single, field, 0.0);
  CHECK((frozen.positions - single.positions).cwiseAbs().maxCoeff() == 0.0);

  Matrix inf_field(1, 2);
  inf_field << std::numeric_limits<double>::infinity(), 0.0;
  CHECK_THROWS_AS(flow_step(single, inf_field, 0.1), DivergenceError);
}

TEST_CASE("particles matching the empirical target do not move") {
  RandomStream stream(3);
  const GaussianKernel kernel(1.0);
  const Matrix x = random_points(stream, 10, 2);
  const auto target = TargetRepresentation::empirical(x);
  ParticleEnsemble e;
  e.positions = x;
  for (FlowKind kind : {FlowKind::MMD, FlowKind::SrMMD, FlowKind::HrMMD}) {
    FlowConfig config = basic_config(kind);
    config.alpha = 0.5;
    const Matrix field = vector_field(config, kernel, target, e);
    CHECK(field.cwiseAbs().maxCoeff() == 0.0);  // exact fixed point
  }
}

TEST_CASE("single Stein particle at the mode is a fixed point") {
  const auto mixture = std_normal(1);
  const auto score = make_score_model(mixture);
  const auto base = std::make_shared<GaussianKernel>(1.0);
  const auto stein = std::make_shared<SteinKernel>(base, score);
  ParticleEnsemble e;
  e.positions = Matrix::Zero(1, 1);
  const Matrix field = vector_field(basic_config(FlowKind::SrMMD), *stein, TargetRepresentation::stein(), e);
  CHECK(field.cwiseAbs().maxCoeff() < 1e-13);

  // SVGD with all particles at the mode also has a zero update
  ParticleEnsemble several;
  several.positions = Matrix::Zero(4, 1);
  const Matrix svgd =
      vector_field(basic_config(FlowKind::SVGD), *base, TargetRepresentation::stein(), several, score.get());
  CHECK(svgd.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("srmmd field approaches the mmd field in the large-lambda limit") {
  RandomStream stream(5);
  const GaussianKernel kernel(1.0);
  const Matrix x = random_points(stream, 20, 2);
  const auto target = TargetRepresentation::empirical(random_points(stream, 15, 2));
  ParticleEnsemble e;
  e.positions = x;

  const Matrix mmd = vector_field(basic_config(FlowKind::MMD), kernel, target, e);
  FlowConfig big = basic_config(FlowKind::SrMMD);
  big.lambda = 1e6;
  const Matrix srmmd = vector_field(big, kernel, target, e);
  CHECK(rel_error(Matrix(big.lambda * srmmd), mmd) < 1e-3);
}

TEST_CASE("ksd flow matches a direct stein-gradient average") {
  RandomStream stream(7);
  const auto mixture = std_normal(2);
  const auto stein = std::make_shared<SteinKernel>(std::make_shared<GaussianKernel>(0.9),
                                                   make_score_model(mixture));
  const Matrix x = random_points(stream, 6, 2);
  ParticleEnsemble e;
  e.positions = x;
  const Matrix field = vector_field(basic_config(FlowKind::KSD), *stein, TargetRepresentation::stein(), e);
  for (Index i = 0; i < x.rows(); ++i) {
    Vector expected = Vector::Zero(2);
    for (Index j = 0; j < x.rows(); ++j) expected += stein->derivative_stack(x.row(j), x.row(i)).grad2;
    expected /= static_cast<double>(x.rows());
    CHECK((field.row(i).transpose() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("noise injection") {
  RandomStream stream(9);
  const GaussianKernel kernel(1.0);
  const Matrix x = random_points(stream, 8, 2);
  const auto target = TargetRepresentation::analytic(four_gaussian_benchmark(), 1.0);
  ParticleEnsemble e;
  e.positions = x;
  const auto field_at = [&](const VectorRef& z) {
    Vector g = Vector::Zero(2);
    for (Index j = 0; j < x.rows(); ++j) g += kernel.grad2(x.row(j), z);
    g /= static_cast<double>(x.rows());
    g -= target.mean_embedding_grad(kernel, z);
    return g;
  };

  RandomStream noise_a(41), noise_b(41), noise_c(41);
  const Matrix plain = noise_injected_field(e, field_at, 0.0, noise_a);
  Matrix direct(8, 2);
  for (Index i = 0; i < 8; ++i) direct.row(i) = field_at(x.row(i)).transpose();
  CHECK((plain - direct).cwiseAbs().maxCoeff() == 0.0);  // noise 0 is bit-exact

  const Matrix noisy1 = noise_injected_field(e, field_at, 0.1, noise_b);
  const Matrix noisy2 = noise_injected_field(e, field_at, 0.1, noise_c);
  CHECK((noisy1 - noisy2).cwiseAbs().maxCoeff() == 0.0);  // same stream state, bit-identical
  CHECK((noisy1 - plain).cwiseAbs().maxCoeff() > 0.0);    // perturbation is non-degenerate
}

TEST_CASE("run_flow basics: zero iterations, determinism, logging") {
  RandomStream stream(11);
  const GaussianKernel kernel(1.0);
  const auto target = TargetRepresentation::analytic(four_gaussian_benchmark(), 1.0);
  ParticleEnsemble e;
  e.positions = random_points(stream, 12, 2);

  FlowConfig config = basic_config(FlowKind::SrMMD);
  config.iterations = 0;
  MetricPlan plan;
  plan.mmd_kernel = &kernel;
  plan.target = &target;
  const FlowTrajectory still = run_flow(config, kernel, target, e, nullptr, plan);
  CHECK((still.final_positions - e.positions).cwiseAbs().maxCoeff() == 0.0);
  CHECK(still.log.size() == 1);
  CHECK(still.log[0].step == 0);

  config.iterations = 25;
  config.seed = 1234;
  const FlowTrajectory a = run_flow(config, kernel, target, e, nullptr, plan);
  const FlowTrajectory b = run_flow(config, kernel, target, e, nullptr, plan);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].step == b.log[i].step);
    CHECK(a.log[i].mmd2 == b.log[i].mmd2);  // bit-identical
  }
  CHECK((a.final_positions - b.final_positions).cwiseAbs().maxCoeff() == 0.0);
  // rows strictly increasing in step, final step logged
  for (std::size_t i = 1; i < a.log.size(); ++i) CHECK(a.log[i].step > a.log[i - 1].step);
  CHECK(a.log.back().step == 25);
}

TEST_CASE("noise-injected mmd flow is seeded and reproducible end to end") {
  RandomStream stream(23);
  const GaussianKernel kernel(1.0);
  const auto target = TargetRepresentation::analytic(four_gaussian_benchmark(), 1.0);
  ParticleEnsemble e;
  e.positions = 0.5 * stream.normal_matrix(10, 2);

  FlowConfig noisy = basic_config(FlowKind::MMD);
  noisy.noise = 0.1;
  noisy.iterations = 30;
  noisy.seed = 77;
  const FlowTrajectory a = run_flow(noisy, kernel, target, e);
  const FlowTrajectory b = run_flow(noisy, kernel, target, e);
  CHECK((a.final_positions - b.final_positions).cwiseAbs().maxCoeff() == 0.0);

  FlowConfig plain = noisy;
  plain.noise = 0.0;
  const FlowTrajectory c = run_flow(plain, kernel, target, e);
  CHECK((a.final_positions - c.final_positions).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("srmmd decreases mmd2 on the benchmark mixture") {
  RandomStream stream(13);
  const GaussianKernel kernel(1.0);
  const auto target = TargetRepresentation::analytic(four_gaussian_benchmark(), 1.0);
  ParticleEnsemble e;
  e.positions = 0.5 * stream.normal_matrix(50, 2);

  FlowConfig config = basic_config(FlowKind::SrMMD);
  config.iterations = 200;
  config.metric_cadence = 1;
  MetricPlan plan;
  plan.mmd_kernel = &kernel;
  plan.target = &target;
  const FlowTrajectory trajectory = run_flow(config, kernel, target, e, nullptr, plan);
  for (std::size_t i = 1; i < trajectory.log.size(); ++i) {
    CHECK(trajectory.log[i].mmd2 <= trajectory.log[i - 1].mmd2 + 1e-6);
  }
  CHECK(trajectory.log.back().mmd2 < trajectory.log.front().mmd2);
}

TEST_CASE("hrmmd trajectory at alpha 1 equals the srmmd trajectory") {
  RandomStream stream(15);
  const GaussianKernel kernel(1.0);
  const auto target = TargetRepresentation::analytic(four_gaussian_benchmark(), 1.0);
  ParticleEnsemble e;
  e.positions = 0.5 * stream.normal_matrix(20, 2);

  FlowConfig srmmd = basic_config(FlowKind::SrMMD);
  srmmd.iterations = 100;
  FlowConfig hrmmd = basic_config(FlowKind::HrMMD);
  hrmmd.iterations = 100;
  hrmmd.alpha = 1.0;
  const FlowTrajectory a = run_flow(srmmd, kernel, target, e);
  const FlowTrajectory b = run_flow(hrmmd, kernel, target, e);
  CHECK((a.final_positions - b.final_positions).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("configuration validation") {
  RandomStream stream(17);
  const GaussianKernel kernel(1.0);
  const auto mixture = std_normal(2);
  const auto score = make_score_model(mixture);
  const auto stein = std::make_shared<SteinKernel>(std::make_shared<GaussianKernel>(1.0), score);
  const auto empirical = TargetRepresentation::empirical(random_points(stream, 5, 2));
  ParticleEnsemble e;
  e.positions = random_points(stream, 4, 2);

  // svgd needs a score and the Stein target
  CHECK_THROWS_AS(vector_field(basic_config(FlowKind::SVGD), kernel, empirical, e, nullptr), ConfigError);
  CHECK_THROWS_AS(vector_field(basic_config(FlowKind::SVGD), kernel, empirical, e, score.get()), ConfigError);
  // ksd needs a Stein kernel
  CHECK_THROWS_AS(vector_field(basic_config(FlowKind::KSD), kernel, TargetRepresentation::stein(), e),
                  ConfigError);
  // mmd cannot run in Stein mode
  CHECK_THROWS_AS(vector_field(basic_config(FlowKind::MMD), *stein, TargetRepresentation::stein(), e),
                  ConfigError);
  // srmmd in Stein mode needs the Stein kernel
  CHECK_THROWS_AS(vector_field(basic_config(FlowKind::SrMMD), kernel, TargetRepresentation::stein(), e),
                  ConfigError);
  // a Stein kernel against an empirical target is inconsistent
  CHECK_THROWS_AS(vector_field(basic_config(FlowKind::SrMMD), *stein, empirical, e), ConfigError);
  // lambda must be positive for the regularized flows
  CHECK_THROWS_AS(vector_field(basic_config(FlowKind::SrMMD, 0.1, 0.0), kernel, empirical, e), ConfigError);
  // noise injection is an mmd-only option
  FlowConfig noisy = basic_config(FlowKind::SrMMD);
  noisy.noise = 0.5;
  CHECK_THROWS_AS(vector_field(noisy, kernel, empirical, e), ConfigError);
}

TEST_CASE("divergence carries the last finite ensemble") {
  RandomStream stream(19);
  const GaussianKernel kernel(1.0);
  const auto target = TargetRepresentation::empirical(random_points(stream, 5, 2));
  ParticleEnsemble e;
  e.positions = 1e150 * Matrix::Ones(3, 2);

  FlowConfig config = basic_config(FlowKind::MMD, 1e300);
  config.iterations = 10;
  try {
    run_flow(config, kernel, target, e);
  } catch (const DivergenceError& err) {
    CHECK(err.step >= 1);
    CHECK(err.last_positions.allFinite());
    return;
  }
  // polynomial growth from a huge start must overflow
  const PolynomialQuadraticKernel poly;
  CHECK_THROWS_AS(run_flow(config, poly, target, e), DivergenceError);
}

TEST_CASE("feature-primal witness route gives the same srmmd trajectory") {
  RandomStream stream(21);
  const PolynomialQuadraticKernel poly;
  const auto target = TargetRepresentation::empirical(random_points(stream, 9, 2));
  ParticleEnsemble e;
  e.positions = random_points(stream, 7, 2);

  FlowConfig dual = basic_config(FlowKind::SrMMD);
  dual.iterations = 50;
  FlowConfig primal = dual;
  primal.feature_primal_witness = true;
  const FlowTrajectory a = run_flow(dual, poly, target, e);
  const FlowTrajectory b = run_flow(primal, poly, target, e);
  CHECK((a.final_positions - b.final_positions).cwiseAbs().maxCoeff() < 1e-7);

  FlowConfig hybrid_dual = basic_config(FlowKind::HrMMD);
  hybrid_dual.iterations = 50;
  hybrid_dual.alpha = 0.4;
  FlowConfig hybrid_primal = hybrid_dual;
  hybrid_primal.feature_primal_witness = true;
  const FlowTrajectory c = run_flow(hybrid_dual, poly, target, e);
  const FlowTrajectory d = run_flow(hybrid_primal, poly, target, e);
  CHECK((c.final_positions - d.final_positions).cwiseAbs().maxCoeff() < 1e-7);
}
