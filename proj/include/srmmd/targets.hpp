#pragma once

#include "srmmd/kernels.hpp"
#include "srmmd/rng.hpp"
#include "srmmd/stein.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace srmmd {

// ---------------------------------------------------------------------------
// Gaussian mixture
// ---------------------------------------------------------------------------

class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> weights, std::vector<Vector> means, std::vector<Matrix> covariances);

  Index dim() const { return means_[0].size(); }
  Index components() const { return static_cast<Index>(weights_.size()); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Vector>& means() const { return means_; }
  const std::vector<Matrix>& covariances() const { return covariances_; }

  double log_density(const VectorRef& x) const;
  /// Score via log-space responsibilities; stable at extreme x.
  Vector score(const VectorRef& x) const;
  Matrix score_jacobian(const VectorRef& x) const;

  Matrix sample(Index count, std::uint64_t seed) const;
  Matrix sample(Index count, RandomStream& stream) const;

  Vector mean() const;

 private:
  std::vector<double> weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covariances_;
  std::vector<Matrix> cov_cholesky_;   // lower factors, for sampling
  std::vector<Matrix> precisions_;
  std::vector<double> log_norm_;       // log w_c - (d/2) log 2pi - (1/2) log det
};

/// The four-component benchmark: means (+-2, +-2), covariance 1.2 I, equal weights.
GaussianMixture four_gaussian_benchmark();

/// Two-dimensional mixture of 10 Gaussians: means equally spaced on a circle of
/// radius 5, covariance 0.5 I, equal weights.
GaussianMixture ten_gaussian_ring();

// ---------------------------------------------------------------------------
// Closed-form Gaussian-kernel mean embedding of a Gaussian mixture
// ---------------------------------------------------------------------------

/// m_pi(x) = sum_c w_c |Id + sigma^-2 Cov_c|^(-1/2)
///             exp(-(x - m_c)^T (Cov_c + sigma^2 Id)^-1 (x - m_c) / 2)
/// together with its gradient and the constant double integral of the kernel.
class MixtureEmbedding {
 public:
  MixtureEmbedding(const GaussianMixture& mixture, double sigma);

  double value(const VectorRef& x) const;
  Vector gradient(const VectorRef& x) const;
  void value_and_gradient(const VectorRef& x, double& value, Vector& gradient) const;
  /// Integral of k d(pi x pi); cached after the first call.
  double double_integral() const;

  double sigma() const { return sigma_; }
  const GaussianMixture& mixture() const { return mixture_; }

 private:
  GaussianMixture mixture_;
  double sigma_;
  std::vector<double> factors_;          // |Id + sigma^-2 Cov|^(-1/2)
  std::vector<Matrix> smoothed_precisions_;  // (Cov + sigma^2 Id)^-1
  mutable std::optional<double> double_integral_;
};

// ---------------------------------------------------------------------------
// Swiss roll
// ---------------------------------------------------------------------------

struct SwissRoll {
  double t_min = 1.5 * M_PI;
  double t_max = 4.5 * M_PI;
  double scale = 3.0;
  double noise = 0.05;

  /// Rows (t cos t, t sin t) / scale + noise * N(0, I2), t ~ U[t_min, t_max].
  Matrix sample(Index count, std::uint64_t seed) const;
};

// ---------------------------------------------------------------------------
// Bayesian logistic posterior
// ---------------------------------------------------------------------------

class LogisticPosterior {
 public:
  LogisticPosterior(Matrix design, Vector labels, double prior_scale = 1.0);

  Index dim() const { return design_.cols(); }
  const Matrix& design() const { return design_; }
  const Vector& labels() const { return labels_; }
  double prior_scale() const { return prior_scale_; }

  double log_density(const VectorRef& x) const;  // up to the normalizing constant
  Vector score(const VectorRef& x) const;
  Matrix score_jacobian(const VectorRef& x) const;

 private:
  Matrix design_;  // n x p
  Vector labels_;  // entries in {0, 1}
  double prior_scale_;
};

struct PredictiveMetrics {
  double accuracy = 0.0;
  double mean_log_likelihood = 0.0;
};

/// Bayesian model averaging over a particle ensemble: predictive probability
/// (1/N) sum_i sigmoid(z . x_i), accuracy at threshold 0.5, mean log likelihood.
PredictiveMetrics logistic_metrics(const MatrixRef& design, const VectorRef& labels, const MatrixRef& ensemble);

struct LabeledDataset {
  Matrix features;
  Vector labels;
};

/// UCI-style CSV: optional header row, last column is a binary label.
LabeledDataset load_labeled_csv(const std::string& path);

struct TrainTestSplit {
  LabeledDataset train;
  LabeledDataset test;
};

/// Seeded 2/3-1/3 split; features standardized with the training split's
/// mean and standard deviation.
TrainTestSplit split_standardize(const LabeledDataset& data, std::uint64_t seed, double train_fraction = 2.0 / 3.0);

/// Synthetic separable-with-noise binary dataset (labels flipped with the given rate).
LabeledDataset make_synthetic_logistic(Index count, Index dim, double flip_rate, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Score-model adapters
// ---------------------------------------------------------------------------

std::shared_ptr<ScoreModel> make_score_model(std::shared_ptr<const GaussianMixture> mixture);
std::shared_ptr<ScoreModel> make_score_model(std::shared_ptr<const LogisticPosterior> posterior);

// ---------------------------------------------------------------------------
// Student-teacher construction
// ---------------------------------------------------------------------------

struct StudentTeacherSetup {
  Matrix teacher;       // M x 53 teacher parameter samples
  Matrix train_probes;  // 1000 x 50, uniform on the unit sphere
  Matrix val_probes;    // 1000 x 50
  Index probe_subsample = 100;
};

/// Teacher distribution N(0, Id) on R^53 with M = 10 samples; probe sets drawn
/// uniformly on the unit sphere in R^50.
StudentTeacherSetup make_student_teacher_setup(std::uint64_t seed, Index teacher_count = 10,
                                               Index train_probes = 1000, Index val_probes = 1000);

/// Rows uniform on the unit sphere S^(d-1), via normalized Gaussians.
Matrix sample_unit_sphere(Index count, Index dim, RandomStream& stream);

/// Mean-field objective E_z |Psi_teacher(z) - Psi_student(z)|^2 over the probe
/// rows. Equals MMD^2 under the probe-network feature kernel.
double student_teacher_objective(const MatrixRef& teacher, const MatrixRef& students, const MatrixRef& probes);

// ---------------------------------------------------------------------------
// Target representation used by witness systems and metrics
// ---------------------------------------------------------------------------

/// How the target distribution enters the flow: an empirical sample set, a
/// closed-form Gaussian-mixture embedding, or a Stein kernel (m_pi = 0).
class TargetRepresentation {
 public:
  enum class Kind { Empirical, AnalyticGaussianMixture, Stein };

  static TargetRepresentation empirical(Matrix samples);
  static TargetRepresentation analytic(GaussianMixture mixture, double kernel_sigma);
  static TargetRepresentation stein();

  Kind kind() const { return kind_; }
  bool is_stein() const { return kind_ == Kind::Stein; }
  const Matrix& samples() const;
  const MixtureEmbedding& embedding() const;

  /// E_pi[k(Y, z)].
  double mean_embedding(const Kernel& kernel, const VectorRef& z) const;
  /// Gradient of the above in z.
  Vector mean_embedding_grad(const Kernel& kernel, const VectorRef& z) const;
  /// E_Y[grad1 k(x, Y)]; the gradient of the mean embedding at x for symmetric kernels.
  Vector grad1_expectation(const Kernel& kernel, const VectorRef& x) const;
  /// Integral of k d(pi x pi).
  double double_integral(const Kernel& kernel) const;

  /// Throws ConfigError unless the kernel matches this representation
  /// (analytic embeddings require the Gaussian kernel with the stored lengthscale).
  void validate_kernel(const Kernel& kernel) const;

 private:
  TargetRepresentation() = default;

  Kind kind_ = Kind::Stein;
  std::shared_ptr<const Matrix> samples_;
  std::shared_ptr<const MixtureEmbedding> embedding_;
};

}  // namespace srmmd
