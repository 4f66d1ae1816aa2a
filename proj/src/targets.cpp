#include "srmmd/targets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace srmmd {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// GaussianMixture
// ---------------------------------------------------------------------------

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Vector> means,
                                 std::vector<Matrix> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  if (weights_.empty() || weights_.size() != means_.size() || weights_.size() != covariances_.size()) {
    throw std::invalid_argument("mixture needs matching nonempty weights, means, covariances");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w > 0.0)) throw std::invalid_argument("mixture weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to 1");
  for (double& w : weights_) w /= total;

  const Index d = means_[0].size();
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    if (means_[c].size() != d || covariances_[c].rows() != d || covariances_[c].cols() != d) {
      throw std::invalid_argument("mixture component dimensions disagree");
    }
    if (!covariances_[c].isApprox(covariances_[c].transpose(), 1e-12)) {
      throw std::invalid_argument("mixture covariance must be symmetric");
    }
    Eigen::LLT<Matrix> llt(covariances_[c]);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("mixture covariance must be positive definite");
    }
    cov_cholesky_.push_back(llt.matrixL());
    precisions_.push_back(llt.solve(Matrix::Identity(d, d)));
    const double log_det = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
    log_norm_.push_back(std::log(weights_[c]) - 0.5 * static_cast<double>(d) * kLog2Pi - 0.5 * log_det);
  }
}

double GaussianMixture::log_density(const VectorRef& x) const {
  std::vector<double> terms(weights_.size());
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    const Vector q = x - means_[c];
    terms[c] = log_norm_[c] - 0.5 * q.dot(precisions_[c] * q);
  }
  return log_sum_exp(terms);
}

Vector GaussianMixture::score(const VectorRef& x) const {
  std::vector<double> logits(weights_.size());
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    const Vector q = x - means_[c];
    logits[c] = log_norm_[c] - 0.5 * q.dot(precisions_[c] * q);
  }
  const double lse = log_sum_exp(logits);
  Vector s = Vector::Zero(x.size());
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    const double resp = std::exp(logits[c] - lse);
    s.noalias() -= resp * (precisions_[c] * (x - means_[c]));
  }
  return s;
}

Matrix GaussianMixture::score_jacobian(const VectorRef& x) const {
  const Index d = x.size();
  std::vector<double> logits(weights_.size());
  std::vector<Vector> comp_scores(weights_.size());
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    const Vector q = x - means_[c];
    comp_scores[c] = -(precisions_[c] * q);
    logits[c] = log_norm_[c] - 0.5 * q.dot(precisions_[c] * q);
  }
  const double lse = log_sum_exp(logits);
  Vector s = Vector::Zero(d);
  std::vector<double> resp(weights_.size());
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    resp[c] = std::exp(logits[c] - lse);
    s += resp[c] * comp_scores[c];
  }
  // J = sum_c r_c (-P_c + s_c s_c^T) - s s^T
  Matrix j = Matrix::Zero(d, d);
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    j.noalias() -= resp[c] * precisions_[c];
    j.noalias() += resp[c] * (comp_scores[c] * comp_scores[c].transpose());
  }
  j.noalias() -= s * s.transpose();
  return j;
}

Matrix GaussianMixture::sample(Index count, RandomStream& stream) const {
  const Index d = dim();
  std::vector<double> cum(weights_.size());
  double acc = 0.0;
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    acc += weights_[c];
    cum[c] = acc;
  }
  Matrix out(count, d);
  for (Index i = 0; i < count; ++i) {
    const double u = stream.uniform();
    std::size_t c = 0;
    while (c + 1 < cum.size() && u >= cum[c]) ++c;
    out.row(i) = (means_[c] + cov_cholesky_[c] * stream.normal_vector(d)).transpose();
  }
  return out;
}

Matrix GaussianMixture::sample(Index count, std::uint64_t seed) const {
  RandomStream stream(seed);
  return sample(count, stream);
}

Vector GaussianMixture::mean() const {
  Vector m = Vector::Zero(dim());
  for (std::size_t c = 0; c < weights_.size(); ++c) m += weights_[c] * means_[c];
  return m;
}

GaussianMixture four_gaussian_benchmark() {
  std::vector<double> w(4, 0.25);
  std::vector<Vector> means;
  for (double sx : {1.0, -1.0})
    for (double sy : {1.0, -1.0}) means.push_back(Vector{{2.0 * sx, 2.0 * sy}});
  std::vector<Matrix> covs(4, 1.2 * Matrix::Identity(2, 2));
  return GaussianMixture(w, means, covs);
}

GaussianMixture ten_gaussian_ring() {
  std::vector<double> w(10, 0.1);
  std::vector<Vector> means;
  for (int c = 0; c < 10; ++c) {
    const double angle = 2.0 * M_PI * c / 10.0;
    means.push_back(Vector{{5.0 * std::cos(angle), 5.0 * std::sin(angle)}});
  }
  std::vector<Matrix> covs(10, 0.5 * Matrix::Identity(2, 2));
  return GaussianMixture(w, means, covs);
}

// ---------------------------------------------------------------------------
// MixtureEmbedding
// ---------------------------------------------------------------------------

MixtureEmbedding::MixtureEmbedding(const GaussianMixture& mixture, double sigma)
    : mixture_(mixture), sigma_(sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("embedding lengthscale must be positive");
  const Index d = mixture_.dim();
  const double s2 = sigma * sigma;
  for (Index c = 0; c < mixture_.components(); ++c) {
    const Matrix a = mixture_.covariances()[static_cast<std::size_t>(c)] + s2 * Matrix::Identity(d, d);
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("smoothed covariance not positive definite");
    const double log_det_a = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
    // |Id + sigma^-2 Cov|^(-1/2) = sigma^d |Cov + sigma^2 Id|^(-1/2)
    factors_.push_back(std::exp(0.5 * static_cast<double>(d) * std::log(s2) - 0.5 * log_det_a));
    smoothed_precisions_.push_back(llt.solve(Matrix::Identity(d, d)));
  }
}

void MixtureEmbedding::value_and_gradient(const VectorRef& x, double& value, Vector& gradient) const {
  value = 0.0;
  gradient = Vector::Zero(x.size());
  for (Index c = 0; c < mixture_.components(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const Vector q = x - mixture_.means()[ci];
    const Vector pq = smoothed_precisions_[ci] * q;
    const double term = mixture_.weights()[ci] * factors_[ci] * std::exp(-0.5 * q.dot(pq));
    value += term;
    gradient.noalias() -= term * pq;
  }
}

double MixtureEmbedding::value(const VectorRef& x) const {
  double v;
  Vector g;
  value_and_gradient(x, v, g);
  return v;
}

Vector MixtureEmbedding::gradient(const VectorRef& x) const {
  double v;
  Vector g;
  value_and_gradient(x, v, g);
  return g;
}

double MixtureEmbedding::double_integral() const {
  if (double_integral_) return *double_integral_;
  const Index d = mixture_.dim();
  const double s2 = sigma_ * sigma_;
  double total = 0.0;
  for (Index c = 0; c < mixture_.components(); ++c) {
    for (Index e = 0; e < mixture_.components(); ++e) {
      const auto ci = static_cast<std::size_t>(c), ei = static_cast<std::size_t>(e);
      const Matrix a = mixture_.covariances()[ci] + mixture_.covariances()[ei] + s2 * Matrix::Identity(d, d);
      Eigen::LLT<Matrix> llt(a);
      const double log_det_a = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
      const Vector delta = mixture_.means()[ci] - mixture_.means()[ei];
      const double quad = delta.dot(llt.solve(delta));
      total += mixture_.weights()[ci] * mixture_.weights()[ei] *
               std::exp(0.5 * static_cast<double>(d) * std::log(s2) - 0.5 * log_det_a - 0.5 * quad);
    }
  }
  double_integral_ = total;
  return total;
}

// ---------------------------------------------------------------------------
// SwissRoll
// ---------------------------------------------------------------------------

Matrix SwissRoll::sample(Index count, std::uint64_t seed) const {
  RandomStream stream(seed);
  Matrix out(count, 2);
  for (Index i = 0; i < count; ++i) {
    const double t = t_min + (t_max - t_min) * stream.uniform();
    out(i, 0) = t * std::cos(t) / scale + noise * stream.normal();
    out(i, 1) = t * std::sin(t) / scale + noise * stream.normal();
  }
  return out;
}

// ---------------------------------------------------------------------------
// LogisticPosterior
// ---------------------------------------------------------------------------

LogisticPosterior::LogisticPosterior(Matrix design, Vector labels, double prior_scale)
    : design_(std::move(design)), labels_(std::move(labels)), prior_scale_(prior_scale) {
  if (design_.rows() != labels_.size()) {
    throw std::invalid_argument("design rows and label count disagree");
  }
  for (Index i = 0; i < labels_.size(); ++i) {
    if (labels_[i] != 0.0 && labels_[i] != 1.0) throw std::invalid_argument("labels must be 0 or 1");
  }
  if (!(prior_scale_ > 0.0)) throw std::invalid_argument("prior scale must be positive");
}

double LogisticPosterior::log_density(const VectorRef& x) const {
  const Vector logits = design_ * x;
  double ll = -0.5 * x.squaredNorm() / (prior_scale_ * prior_scale_);
  for (Index i = 0; i < logits.size(); ++i) {
    // y t - log(1 + e^t), computed stably
    const double t = logits[i];
    ll += labels_[i] * t - (t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)));
  }
  return ll;
}

Vector LogisticPosterior::score(const VectorRef& x) const {
  Vector probs = design_ * x;
  for (Index i = 0; i < probs.size(); ++i) probs[i] = sigmoid(probs[i]);
  return -x / (prior_scale_ * prior_scale_) + design_.transpose() * (labels_ - probs);
}

Matrix LogisticPosterior::score_jacobian(const VectorRef& x) const {
  Vector w = design_ * x;
  for (Index i = 0; i < w.size(); ++i) {
    const double s = sigmoid(w[i]);
    w[i] = s * (1.0 - s);
  }
  Matrix j = -(design_.transpose() * w.asDiagonal() * design_);
  j.diagonal().array() -= 1.0 / (prior_scale_ * prior_scale_);
  return j;
}

PredictiveMetrics logistic_metrics(const MatrixRef& design, const VectorRef& labels, const MatrixRef& ensemble) {
  if (design.rows() != labels.size()) throw std::invalid_argument("design rows and label count disagree");
  if (design.cols() != ensemble.cols()) throw std::invalid_argument("ensemble dimension must match feature count");
  const Index n = design.rows();
  const Index particles = ensemble.rows();
  PredictiveMetrics out;
  for (Index i = 0; i < n; ++i) {
    double prob = 0.0;
    for (Index j = 0; j < particles; ++j) prob += sigmoid(design.row(i).dot(ensemble.row(j)));
    prob /= static_cast<double>(particles);
    const bool predicted = prob >= 0.5;
    if (predicted == (labels[i] == 1.0)) out.accuracy += 1.0;
    out.mean_log_likelihood += std::log(labels[i] == 1.0 ? prob : 1.0 - prob);
  }
  out.accuracy /= static_cast<double>(n);
  out.mean_log_likelihood /= static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------------------
// CSV loading, splitting, synthetic data
// ---------------------------------------------------------------------------

LabeledDataset load_labeled_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
        if (pos != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (first && !numeric) {
      first = false;  // header row
      continue;
    }
    first = false;
    if (!numeric) throw std::runtime_error("non-numeric cell outside header in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("CSV has no data rows: " + path);
  const std::size_t width = rows[0].size();
  if (width < 2) throw std::runtime_error("CSV needs at least one feature column and a label column");
  LabeledDataset data;
  data.features.resize(static_cast<Index>(rows.size()), static_cast<Index>(width - 1));
  data.labels.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != width) throw std::runtime_error("ragged CSV row in " + path);
    for (std::size_t j = 0; j + 1 < width; ++j) data.features(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    const double label = rows[i][width - 1];
    if (label != 0.0 && label != 1.0) throw std::runtime_error("labels must be 0 or 1 in " + path);
    data.labels[static_cast<Index>(i)] = label;
  }
  return data;
}

TrainTestSplit split_standardize(const LabeledDataset& data, std::uint64_t seed, double train_fraction) {
  const Index n = data.features.rows();
  if (n < 3) throw std::invalid_argument("dataset too small to split");
  RandomStream stream(derive_seed(seed, "train-test-split"));
  const Index train_n = std::max<Index>(1, static_cast<Index>(std::llround(train_fraction * static_cast<double>(n))));
  std::vector<Index> order = stream.sample_without_replacement(n, n);

  TrainTestSplit split;
  split.train.features.resize(train_n, data.features.cols());
  split.train.labels.resize(train_n);
  split.test.features.resize(n - train_n, data.features.cols());
  split.test.labels.resize(n - train_n);
  for (Index i = 0; i < train_n; ++i) {
    split.train.features.row(i) = data.features.row(order[static_cast<std::size_t>(i)]);
    split.train.labels[i] = data.labels[order[static_cast<std::size_t>(i)]];
  }
  for (Index i = train_n; i < n; ++i) {
    split.test.features.row(i - train_n) = data.features.row(order[static_cast<std::size_t>(i)]);
    split.test.labels[i - train_n] = data.labels[order[static_cast<std::size_t>(i)]];
  }

  const Vector mean = split.train.features.colwise().mean();
  Vector sd(data.features.cols());
  for (Index j = 0; j < data.features.cols(); ++j) {
    const double var = (split.train.features.col(j).array() - mean[j]).square().mean();
    sd[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  for (auto* part : {&split.train, &split.test}) {
    part->features.rowwise() -= mean.transpose();
    part->features.array().rowwise() /= sd.transpose().array();
  }
  return split;
}

LabeledDataset make_synthetic_logistic(Index count, Index dim, double flip_rate, std::uint64_t seed) {
  RandomStream stream(seed);
  Vector truth = stream.normal_vector(dim);
  truth *= 3.0 / truth.norm();
  LabeledDataset data;
  data.features = stream.normal_matrix(count, dim);
  data.labels.resize(count);
  for (Index i = 0; i < count; ++i) {
    double label = data.features.row(i).dot(truth) >= 0.0 ? 1.0 : 0.0;
    if (stream.uniform() < flip_rate) label = 1.0 - label;
    data.labels[i] = label;
  }
  return data;
}

// ---------------------------------------------------------------------------
// Score-model adapters
// ---------------------------------------------------------------------------

namespace {

class MixtureScore final : public ScoreModel {
 public:
  explicit MixtureScore(std::shared_ptr<const GaussianMixture> m) : mixture_(std::move(m)) {}
  Index dim() const override { return mixture_->dim(); }
  Vector score(const VectorRef& x) const override { return mixture_->score(x); }
  Matrix score_jacobian(const VectorRef& x) const override { return mixture_->score_jacobian(x); }

 private:
  std::shared_ptr<const GaussianMixture> mixture_;
};

class LogisticScore final : public ScoreModel {
 public:
  explicit LogisticScore(std::shared_ptr<const LogisticPosterior> p) : posterior_(std::move(p)) {}
  Index dim() const override { return posterior_->dim(); }
  Vector score(const VectorRef& x) const override { return posterior_->score(x); }
  Matrix score_jacobian(const VectorRef& x) const override { return posterior_->score_jacobian(x); }

 private:
  std::shared_ptr<const LogisticPosterior> posterior_;
};

}  // namespace

std::shared_ptr<ScoreModel> make_score_model(std::shared_ptr<const GaussianMixture> mixture) {
  return std::make_shared<MixtureScore>(std::move(mixture));
}

std::shared_ptr<ScoreModel> make_score_model(std::shared_ptr<const LogisticPosterior> posterior) {
  return std::make_shared<LogisticScore>(std::move(posterior));
}

// ---------------------------------------------------------------------------
// Student-teacher
// ---------------------------------------------------------------------------

Matrix sample_unit_sphere(Index count, Index dim, RandomStream& stream) {
  Matrix out(count, dim);
  for (Index i = 0; i < count; ++i) {
    Vector v = stream.normal_vector(dim);
    double norm = v.norm();
    while (norm == 0.0) {
      v = stream.normal_vector(dim);
      norm = v.norm();
    }
    out.row(i) = (v / norm).transpose();
  }
  return out;
}

StudentTeacherSetup make_student_teacher_setup(std::uint64_t seed, Index teacher_count, Index train_probes,
                                               Index val_probes) {
  StudentTeacherSetup setup;
  RandomStream teacher_stream(derive_seed(seed, "teacher"));
  setup.teacher = teacher_stream.normal_matrix(teacher_count, probe_net::kThetaDim);
  RandomStream train_stream(derive_seed(seed, "train-probes"));
  setup.train_probes = sample_unit_sphere(train_probes, probe_net::kProbeDim, train_stream);
  RandomStream val_stream(derive_seed(seed, "val-probes"));
  setup.val_probes = sample_unit_sphere(val_probes, probe_net::kProbeDim, val_stream);
  return setup;
}

double student_teacher_objective(const MatrixRef& teacher, const MatrixRef& students, const MatrixRef& probes) {
  if (probes.rows() < 1) throw std::invalid_argument("probe set must be nonempty");
  const Index b_count = probes.rows();
  Vector teacher_mean = Vector::Zero(b_count);
  for (Index m = 0; m < teacher.rows(); ++m) teacher_mean += probe_net::psi_eval(probes, teacher.row(m)).psi;
  teacher_mean /= static_cast<double>(teacher.rows());
  Vector student_mean = Vector::Zero(b_count);
  for (Index i = 0; i < students.rows(); ++i) student_mean += probe_net::psi_eval(probes, students.row(i)).psi;
  student_mean /= static_cast<double>(students.rows());
  return (teacher_mean - student_mean).squaredNorm() / static_cast<double>(b_count);
}

// ---------------------------------------------------------------------------
// TargetRepresentation
// ---------------------------------------------------------------------------

TargetRepresentation TargetRepresentation::empirical(Matrix samples) {
  if (samples.rows() < 1) throw std::invalid_argument("empirical target needs at least one sample");
  check_finite(samples, "target samples");
  TargetRepresentation t;
  t.kind_ = Kind::Empirical;
  t.samples_ = std::make_shared<const Matrix>(std::move(samples));
  return t;
}

TargetRepresentation TargetRepresentation::analytic(GaussianMixture mixture, double kernel_sigma) {
  TargetRepresentation t;
  t.kind_ = Kind::AnalyticGaussianMixture;
  t.embedding_ = std::make_shared<const MixtureEmbedding>(mixture, kernel_sigma);
  return t;
}

TargetRepresentation TargetRepresentation::stein() {
  TargetRepresentation t;
  t.kind_ = Kind::Stein;
  return t;
}

const Matrix& TargetRepresentation::samples() const {
  if (kind_ != Kind::Empirical) throw std::logic_error("target has no sample set");
  return *samples_;
}

const MixtureEmbedding& TargetRepresentation::embedding() const {
  if (kind_ != Kind::AnalyticGaussianMixture) throw std::logic_error("target has no analytic embedding");
  return *embedding_;
}

void TargetRepresentation::validate_kernel(const Kernel& kernel) const {
  if (kind_ != Kind::AnalyticGaussianMixture) return;
  const auto* gaussian = dynamic_cast<const GaussianKernel*>(&kernel);
  if (gaussian == nullptr) {
    throw ConfigError("analytic Gaussian-mixture targets require a Gaussian kernel");
  }
  if (std::abs(gaussian->sigma() - embedding_->sigma()) > 1e-12 * std::max(1.0, embedding_->sigma())) {
    throw ConfigError("analytic embedding lengthscale does not match the kernel lengthscale");
  }
}

double TargetRepresentation::mean_embedding(const Kernel& kernel, const VectorRef& z) const {
  switch (kind_) {
    case Kind::Stein:
      return 0.0;
    case Kind::AnalyticGaussianMixture:
      validate_kernel(kernel);
      return embedding_->value(z);
    case Kind::Empirical: {
      double acc = 0.0;
      for (Index j = 0; j < samples_->rows(); ++j) acc += kernel.eval(samples_->row(j), z);
      return acc / static_cast<double>(samples_->rows());
    }
  }
  return 0.0;
}

Vector TargetRepresentation::mean_embedding_grad(const Kernel& kernel, const VectorRef& z) const {
  switch (kind_) {
    case Kind::Stein:
      return Vector::Zero(z.size());
    case Kind::AnalyticGaussianMixture:
      validate_kernel(kernel);
      return embedding_->gradient(z);
    case Kind::Empirical: {
      Vector acc = Vector::Zero(z.size());
      for (Index j = 0; j < samples_->rows(); ++j) acc += kernel.grad2(samples_->row(j), z);
      return acc / static_cast<double>(samples_->rows());
    }
  }
  return Vector::Zero(z.size());
}

Vector TargetRepresentation::grad1_expectation(const Kernel& kernel, const VectorRef& x) const {
  switch (kind_) {
    case Kind::Stein:
      return Vector::Zero(x.size());
    case Kind::AnalyticGaussianMixture:
      // E_Y grad1 k(x, Y) is the gradient of the closed-form embedding at x.
      validate_kernel(kernel);
      return embedding_->gradient(x);
    case Kind::Empirical: {
      Vector acc = Vector::Zero(x.size());
      for (Index j = 0; j < samples_->rows(); ++j) acc += kernel.grad1(x, samples_->row(j));
      return acc / static_cast<double>(samples_->rows());
    }
  }
  return Vector::Zero(x.size());
}

double TargetRepresentation::double_integral(const Kernel& kernel) const {
  switch (kind_) {
    case Kind::Stein:
      return 0.0;
    case Kind::AnalyticGaussianMixture:
      validate_kernel(kernel);
      return embedding_->double_integral();
    case Kind::Empirical: {
      const Matrix& y = *samples_;
      double acc = 0.0;
      for (Index i = 0; i < y.rows(); ++i) {
        acc += kernel.eval(y.row(i), y.row(i));
        for (Index j = i + 1; j < y.rows(); ++j) acc += 2.0 * kernel.eval(y.row(i), y.row(j));
      }
      const double m = static_cast<double>(y.rows());
      return acc / (m * m);
    }
  }
  return 0.0;
}

}  // namespace srmmd
