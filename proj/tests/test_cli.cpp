#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "srmmd/experiments.hpp"
#include "srmmd/metrics.hpp"

#include <filesystem>
#include <fstream>

using namespace srmmd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Two-tone test image: left half one color, right half another.
PpmImage two_tone(Index width, Index height, std::array<std::uint8_t, 3> left,
                  std::array<std::uint8_t, 3> right) {
  PpmImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(3 * width * height));
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const auto& c = x < width / 2 ? left : right;
      for (Index k = 0; k < 3; ++k) img.pixels[static_cast<std::size_t>(3 * (y * width + x) + k)] = c[static_cast<std::size_t>(k)];
    }
  }
  return img;
}

}  // namespace

TEST_CASE("ppm round trip is bit exact") {
  const fs::path dir = temp_dir("srmmd_ppm_test");
  PpmImage white;
  white.width = 1;
  white.height = 1;
  white.pixels = {255, 255, 255};
  write_ppm(white, (dir / "white.ppm").string());
  const PpmImage back = read_ppm((dir / "white.ppm").string());
  CHECK(back.width == 1);
  CHECK(back.height == 1);
  CHECK(back.pixels == white.pixels);

  const PpmImage img = two_tone(6, 4, {10, 20, 30}, {200, 100, 0});
  write_ppm(img, (dir / "tone.ppm").string());
  write_ppm(read_ppm((dir / "tone.ppm").string()), (dir / "tone2.ppm").string());
  CHECK(read_bytes(dir / "tone.ppm") == read_bytes(dir / "tone2.ppm"));
  fs::remove_all(dir);
}

TEST_CASE("ppm parse errors") {
  const fs::path dir = temp_dir("srmmd_ppm_errors");
  {
    std::ofstream out(dir / "maxval.ppm", std::ios::binary);
    out << "P6\n1 1\n65535\n";
    out.write("\0\0\0\0\0\0", 6);
  }
  CHECK_THROWS_WITH_AS(read_ppm((dir / "maxval.ppm").string()),
                       doctest::Contains("unsupported PPM format"), std::runtime_error);
  {
    std::ofstream out(dir / "truncated.ppm", std::ios::binary);
    out << "P6\n2 2\n255\n";
    out.write("\1\2\3", 3);  // needs 12 bytes
  }
  CHECK_THROWS_WITH_AS(read_ppm((dir / "truncated.ppm").string()), doctest::Contains("truncated"),
                       std::runtime_error);
  {
    std::ofstream out(dir / "magic.ppm", std::ios::binary);
    out << "P5\n1 1\n255\n";
    out.write("\0", 1);
  }
  CHECK_THROWS_WITH_AS(read_ppm((dir / "magic.ppm").string()), doctest::Contains("P6"), std::runtime_error);
  {
    // comments in the header are legal
    std::ofstream out(dir / "comment.ppm", std::ios::binary);
    out << "P6\n# a comment\n1 1\n255\n";
    out.write("\10\20\30", 3);
  }
  CHECK(read_ppm((dir / "comment.ppm").string()).width == 1);
  fs::remove_all(dir);
}

TEST_CASE("color transfer identity cases") {
  const PpmImage img = two_tone(8, 4, {30, 60, 90}, {220, 40, 10});
  const auto kernel = std::make_shared<GaussianKernel>(1.0);

  // source == target, zero steps, all pixels sampled: bit-exact identity
  FlowConfig frozen;
  frozen.kind = FlowKind::SrMMD;
  frozen.gamma = 0.01;
  frozen.lambda = 0.01;
  frozen.iterations = 0;
  frozen.seed = 5;
  const PpmImage same = color_transfer(img, img, kernel, frozen, img.pixel_count());
  CHECK(same.pixels == img.pixels);

  // gamma = 0 with every pixel as a particle: the recoloring is a self-map
  FlowConfig zero_gamma = frozen;
  zero_gamma.iterations = 25;
  zero_gamma.gamma = 0.0;
  CHECK_THROWS_AS(color_transfer(img, img, kernel, zero_gamma, img.pixel_count()), std::invalid_argument);
  // (a positive step size is required when iterating; zero steps covers gamma=0)

  // determinism: same seed, same output bytes
  const PpmImage target = two_tone(8, 4, {10, 200, 10}, {10, 10, 200});
  FlowConfig moving = frozen;
  moving.iterations = 30;
  const PpmImage a = color_transfer(img, target, kernel, moving, 12);
  const PpmImage b = color_transfer(img, target, kernel, moving, 12);
  CHECK(a.pixels == b.pixels);

  CHECK_THROWS_AS(color_transfer(img, target, kernel, moving, img.pixel_count() + 1), std::invalid_argument);
}

TEST_CASE("run_experiment writes a deterministic artifact set") {
  const fs::path dir_a = temp_dir("srmmd_exp_a");
  const fs::path dir_b = temp_dir("srmmd_exp_b");
  const Json config = {{"experiment", "toy-mixture"},
                       {"seed", 3},
                       {"particles", 12},
                       {"flow", {{"kind", "srmmd"}, {"iterations", 20}, {"metric_cadence", 5}}}};
  const Json resolved = run_experiment(config, dir_a.string());
  run_experiment(config, dir_b.string());

  for (const char* name : {"metrics.csv", "particles_initial.csv", "particles_final.csv", "config_resolved.json"}) {
    CAPTURE(name);
    CHECK(read_bytes(dir_a / name) == read_bytes(dir_b / name));
  }

  // config echo completeness: defaults the code filled in appear in the output
  CHECK(resolved.at("flow").at("gamma").get<double>() == 0.1);
  CHECK(resolved.at("flow").at("lambda").get<double>() == 0.1);
  CHECK(resolved.at("kernel").at("sigma").get<double>() == 1.0);
  CHECK(resolved.at("init").at("std").get<double>() == 0.5);
  const Json echoed = Json::parse(read_bytes(dir_a / "config_resolved.json"));
  CHECK(echoed == resolved);

  // metrics header is the stable schema; rows at steps 0, 5, 10, 15, 20
  std::ifstream metrics(dir_a / "metrics.csv");
  std::string header;
  std::getline(metrics, header);
  CHECK(header == "step,mmd2,ksd2,w2,wall_ms");
  std::string row;
  int rows = 0;
  std::string first_row;
  while (std::getline(metrics, row)) {
    if (first_row.empty()) first_row = row;
    ++rows;
  }
  CHECK(rows == 5);
  CHECK(first_row.substr(0, 2) == "0,");
  CHECK(first_row.back() == ',');  // wall time left empty by default

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("snapshot cadence writes intermediate particle sets") {
  const fs::path dir = temp_dir("srmmd_snapshots");
  const Json config = {{"experiment", "toy-mixture"},
                       {"seed", 3},
                       {"particles", 10},
                       {"w2_reference", false},
                       {"snapshot_cadence", 10},
                       {"flow", {{"kind", "srmmd"}, {"iterations", 20}, {"metric_cadence", 10}}}};
  run_experiment(config, dir.string());
  CHECK(fs::exists(dir / "particles_10.csv"));
  CHECK(fs::exists(dir / "particles_20.csv"));
  const Matrix mid = read_particles_csv((dir / "particles_10.csv").string());
  CHECK(mid.rows() == 10);
  fs::remove_all(dir);
}

TEST_CASE("invalid pairing fails before any file is written") {
  const fs::path dir = temp_dir("srmmd_exp_invalid");
  fs::remove_all(dir);  // run_experiment must not recreate it on failure
  const Json config = {{"experiment", "toy-mixture"},
                       {"seed", 3},
                       {"particles", 8},
                       {"flow", {{"kind", "svgd"}, {"iterations", 10}}}};
  CHECK_THROWS_AS(run_experiment(config, dir.string()), ConfigError);
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("divergence surfaces with partial outputs retained") {
  const fs::path dir = temp_dir("srmmd_divergence");
  // polynomial growth from a huge start under the plain mmd flow overflows fast
  const Json config = {{"experiment", "toy-mixture"},
                       {"seed", 1},
                       {"particles", 6},
                       {"w2_reference", false},
                       {"kernel", {{"kind", "polynomial"}}},
                       {"target", {{"representation", "empirical"}, {"samples", 10}}},
                       {"init", {{"kind", "gaussian"}, {"std", 1e3}}},
                       {"flow", {{"kind", "mmd"}, {"gamma", 1e30}, {"iterations", 50}, {"metric_cadence", 1}}}};
  CHECK_THROWS_AS(run_experiment(config, dir.string()), DivergenceError);
  // the partial log and the last finite ensemble are on disk
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "particles_final.csv"));
  const Matrix last = read_particles_csv((dir / "particles_final.csv").string());
  CHECK(last.allFinite());
  fs::remove_all(dir);
}

TEST_CASE("sampling experiment logs ksd2 and stays deterministic") {
  const fs::path dir_a = temp_dir("srmmd_sampling_a");
  const fs::path dir_b = temp_dir("srmmd_sampling_b");
  const Json config = {{"experiment", "sampling-mixture"},
                       {"seed", 11},
                       {"particles", 16},
                       {"w2_reference", false},
                       {"flow", {{"kind", "srmmd"}, {"iterations", 15}, {"metric_cadence", 5}}}};
  run_experiment(config, dir_a.string());
  run_experiment(config, dir_b.string());
  CHECK(read_bytes(dir_a / "metrics.csv") == read_bytes(dir_b / "metrics.csv"));
  std::ifstream metrics(dir_a / "metrics.csv");
  std::string header, row;
  std::getline(metrics, header);
  std::getline(metrics, row);
  // step,mmd2,ksd2,...: the ksd2 cell is populated
  const auto first_comma = row.find(',');
  const auto second_comma = row.find(',', first_comma + 1);
  const auto third_comma = row.find(',', second_comma + 1);
  CHECK(third_comma > second_comma + 1);
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("swiss-roll experiment runs the riesz srmmd flow and decreases mmd2") {
  const fs::path dir = temp_dir("srmmd_swiss");
  const Json config = {{"experiment", "swiss-roll"},
                       {"seed", 6},
                       {"particles", 25},
                       {"w2_reference", false},
                       {"target", {{"samples", 120}}},
                       {"flow", {{"kind", "srmmd"}, {"iterations", 80}, {"metric_cadence", 20}}}};
  const Json resolved = run_experiment(config, dir.string());
  CHECK(resolved.at("kernel").at("kind").get<std::string>() == "riesz");

  std::ifstream metrics(dir / "metrics.csv");
  std::string line;
  std::getline(metrics, line);
  std::vector<double> mmd2;
  while (std::getline(metrics, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    mmd2.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  REQUIRE(mmd2.size() >= 2);
  CHECK(mmd2.back() < mmd2.front());
  fs::remove_all(dir);
}

TEST_CASE("logistic experiment writes predictive metrics") {
  const fs::path dir = temp_dir("srmmd_logistic");
  const Json config = {{"experiment", "logistic"},
                       {"seed", 2},
                       {"particles", 6},
                       {"dataset", {{"synthetic", {{"count", 60}, {"dim", 3}, {"flip_rate", 0.05}, {"seed", 4}}}}},
                       {"flow", {{"kind", "svgd"}, {"iterations", 40}, {"metric_cadence", 20}}}};
  run_experiment(config, dir.string());
  std::ifstream predictive(dir / "predictive.csv");
  std::string header;
  std::getline(predictive, header);
  CHECK(header == "step,accuracy,log_likelihood");
  int rows = 0;
  std::string row;
  while (std::getline(predictive, row)) ++rows;
  CHECK(rows == 3);  // steps 0, 20, 40
  fs::remove_all(dir);
}

TEST_CASE("student-teacher experiment logs train and validation objectives") {
  const fs::path dir_a = temp_dir("srmmd_student_a");
  const fs::path dir_b = temp_dir("srmmd_student_b");
  const Json config = {{"experiment", "student-teacher"},
                       {"seed", 5},
                       {"particles", 8},
                       {"train_probes", 60},
                       {"val_probes", 40},
                       {"probe_subsample", 20},
                       {"flow", {{"kind", "srmmd"}, {"iterations", 10}, {"metric_cadence", 5}}}};
  run_experiment(config, dir_a.string());
  run_experiment(config, dir_b.string());
  CHECK(read_bytes(dir_a / "student_teacher.csv") == read_bytes(dir_b / "student_teacher.csv"));

  std::ifstream objectives(dir_a / "student_teacher.csv");
  std::string header;
  std::getline(objectives, header);
  CHECK(header == "step,train_objective,val_objective");
  std::vector<double> train;
  std::string row;
  while (std::getline(objectives, row)) {
    const auto c1 = row.find(',');
    const auto c2 = row.find(',', c1 + 1);
    train.push_back(std::stod(row.substr(c1 + 1, c2 - c1 - 1)));
  }
  REQUIRE(train.size() == 3);
  CHECK(train.back() < train.front());  // a few srmmd steps already reduce the objective
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("student-teacher with students at the teacher samples stays put") {
  // build the same setup the experiment uses and check the objective is zero
  const StudentTeacherSetup setup = make_student_teacher_setup(9, 10, 50, 50);
  CHECK(student_teacher_objective(setup.teacher, setup.teacher, setup.train_probes) == 0.0);

  RandomStream subsample_stream(derive_seed(9, "probe-subsample", 0));
  const auto picks = subsample_stream.sample_without_replacement(setup.train_probes.rows(), 20);
  Matrix probes(20, probe_net::kProbeDim);
  for (Index i = 0; i < 20; ++i) probes.row(i) = setup.train_probes.row(picks[static_cast<std::size_t>(i)]);
  const auto kernel = std::make_shared<NetworkFeatureKernel>(probes);

  FlowConfig flow;
  flow.kind = FlowKind::SrMMD;
  flow.lambda = 0.1;
  flow.feature_primal_witness = true;
  ParticleEnsemble e;
  e.positions = setup.teacher;
  const Matrix field =
      vector_field(flow, *kernel, TargetRepresentation::empirical(setup.teacher), e);
  CHECK(field.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("color-transfer experiment is deterministic end to end") {
  const fs::path dir = temp_dir("srmmd_ct_fixtures");
  const PpmImage source = two_tone(10, 6, {40, 40, 200}, {200, 40, 40});
  const PpmImage target = two_tone(10, 6, {30, 180, 30}, {240, 240, 20});
  write_ppm(source, (dir / "source.ppm").string());
  write_ppm(target, (dir / "target.ppm").string());

  const Json config = {{"experiment", "color-transfer"},
                       {"seed", 21},
                       {"particles", 20},
                       {"source", (dir / "source.ppm").string()},
                       {"target_image", (dir / "target.ppm").string()},
                       {"flow", {{"kind", "srmmd"}, {"iterations", 40}, {"metric_cadence", 10}}}};
  const fs::path out_a = temp_dir("srmmd_ct_a");
  const fs::path out_b = temp_dir("srmmd_ct_b");
  run_experiment(config, out_a.string());
  run_experiment(config, out_b.string());
  CHECK(read_bytes(out_a / "recolored.ppm") == read_bytes(out_b / "recolored.ppm"));
  CHECK(read_bytes(out_a / "metrics.csv") == read_bytes(out_b / "metrics.csv"));
  const PpmImage recolored = read_ppm((out_a / "recolored.ppm").string());
  CHECK(recolored.width == source.width);
  CHECK(recolored.height == source.height);
  fs::remove_all(dir);
  fs::remove_all(out_a);
  fs::remove_all(out_b);
}

TEST_CASE("particles csv round trip") {
  const fs::path dir = temp_dir("srmmd_csv");
  RandomStream stream(33);
  const Matrix x = stream.normal_matrix(7, 3);
  write_particles_csv((dir / "p.csv").string(), 42, x);
  const Matrix back = read_particles_csv((dir / "p.csv").string());
  CHECK((back - x).cwiseAbs().maxCoeff() == 0.0);  // %.17g round trip
  fs::remove_all(dir);
}

TEST_CASE("output root resolution") {
  CHECK(resolve_output_dir("/abs/path") == "/abs/path");
  setenv("SRMMD_OUTPUT_ROOT", "/tmp/srmmd_root", 1);
  CHECK(resolve_output_dir("rel") == "/tmp/srmmd_root/rel");
  unsetenv("SRMMD_OUTPUT_ROOT");
  CHECK(resolve_output_dir("rel") == "rel");
}

TEST_CASE("score target factory") {
  const Json mixture_spec = {{"target", "gaussian_mixture"}, {"mixture", {{"preset", "four_gaussian"}}}};
  const ScoreTarget mixture = make_score_target(mixture_spec);
  CHECK(mixture.mixture != nullptr);
  CHECK(mixture.score->dim() == 2);

  const Json logistic_spec = {{"target", "logistic_posterior"},
                              {"synthetic", {{"count", 30}, {"dim", 4}}},
                              {"prior_scale", 2.0}};
  const ScoreTarget logistic = make_score_target(logistic_spec);
  CHECK(logistic.posterior != nullptr);
  CHECK(logistic.score->dim() == 4);

  CHECK_THROWS_AS(make_score_target(Json{{"target", "unknown"}}), ConfigError);
}
