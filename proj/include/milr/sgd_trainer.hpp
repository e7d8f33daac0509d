#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "milr/data_model.hpp"
#include "milr/density_models.hpp"
#include "milr/mil_loss.hpp"

namespace milr {

enum class LrKind { constant, inverse_sqrt };

/// eta_t = eta (constant) or eta / sqrt(t + 1) (inverse_sqrt).
struct LrSchedule {
  LrKind kind = LrKind::constant;
  double eta = 0.05;

  void validate() const;
  double rate(std::size_t t) const;
};

/// Fresh draws from the joint Gaussian model at every iteration.
struct OnlineJointGaussian {
  JointGaussianSpec spec;
};

/// Fresh draws from a scalar regression model at every iteration.
struct OnlineScalarRegression {
  ScalarRegressionSpec spec;
};

/// Batches resampled with replacement from a fixed dataset. The dataset must
/// outlive the trainer call.
struct DatasetResampling {
  const Dataset* data = nullptr;
};

using SampleSource = std::variant<OnlineJointGaussian, OnlineScalarRegression, DatasetResampling>;

/// Produces training batches. In online mode every batch holds the next N
/// draws of the stream, so no sample is ever reused.
class BatchSampler {
 public:
  BatchSampler(SampleSource source, Rng& rng);

  std::size_t input_dim() const;
  std::size_t label_dim() const;
  bool online() const { return !std::holds_alternative<DatasetResampling>(source_); }
  /// Number of examples handed out so far.
  std::size_t stream_position() const { return position_; }

  Dataset next(std::size_t batch_size);

 private:
  SampleSource source_;
  Rng& rng_;
  std::size_t position_ = 0;
};

inline constexpr std::size_t kDefaultHiddenWidth = 16;

struct SgdConfig {
  std::size_t iterations = 5000;
  std::size_t batch_size = 128;
  LrSchedule lr{};
  double lambda_ent = kDefaultLambdaEnt;
  std::uint64_t seed = 0;
  /// When set, every step size must lie in (0, 2 / smoothness).
  std::optional<double> smoothness;

  void validate() const;
};

struct TraceRecord {
  std::size_t t = 0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  double lr = 0.0;
};

struct TrainTrace {
  std::vector<TraceRecord> records;
  double wall_seconds = 0.0;
  std::size_t samples_drawn = 0;
};

struct TrainResult {
  ConditionalGaussianHead head;
  MarginalGaussian marginal;
  TrainTrace trace;
};

/// Plain SGD on the MIL loss with a parametric marginal. Each iteration
/// draws a batch, evaluates the loss and the batch gradient at the current
/// parameters, records them, then steps both parameter vectors.
TrainResult sgd_train(const SgdConfig& config, const SampleSource& source, ConditionalGaussianHead head,
                      MarginalGaussian marginal);

struct MseTrainResult {
  ConditionalGaussianHead head;
  TrainTrace trace;
};

/// Same loop on the mean-squared-error objective (lambda_ent is ignored).
MseTrainResult mse_train(const SgdConfig& config, const SampleSource& source, ConditionalGaussianHead head);

/// min_t (eta_t - s eta_t^2 / 2) over t < T; every eta_t must lie in (0, 2/s).
double alpha_constant(double smoothness, const LrSchedule& schedule, std::size_t iterations);

/// delta0 / (alpha eps) + 2 deviation_sum / (s alpha eps).
double iteration_lower_bound(double delta0, double smoothness, double alpha, double epsilon,
                             double deviation_sum);

/// Testbed with a closed-form population gradient: x ~ N(0, I_dim),
/// y = beta_star . x + noise_sigma * e and the unit-variance Gaussian NLL
///   L(theta) = E[(y - theta . x)^2] / 2 + log(2 pi) / 2
///            = (|theta - beta_star|^2 + noise_sigma^2) / 2 + log(2 pi) / 2,
/// which is 1-smooth with gradient theta - beta_star.
struct LinearGaussianProblem {
  std::size_t dim = 1;
  Vector beta_star{1.0};
  double noise_sigma = 1.0;

  static constexpr double kSmoothness = 1.0;

  void validate() const;
  ScalarRegressionSpec regression_spec() const;
  Dataset sample(std::size_t count, Rng& rng) const;

  double batch_loss(std::span<const double> theta, const Dataset& batch) const;
  Vector batch_gradient(std::span<const double> theta, const Dataset& batch) const;
  Vector exact_gradient(std::span<const double> theta) const;
  double population_loss(std::span<const double> theta) const;
  double min_loss() const;
};

struct LinearSgdRun {
  Vector theta;
  std::vector<TraceRecord> records;  // loss and grad_norm_sq are batch values
  Vector exact_grad_norm_sq;         // |theta_t - beta_star|^2
  Vector deviation_sq;               // |batch gradient - exact gradient|^2
};

LinearSgdRun run_linear_sgd(const LinearGaussianProblem& problem, std::span<const double> theta0,
                            const LrSchedule& lr, std::size_t batch_size, std::size_t iterations,
                            std::uint64_t seed);

struct ConvergenceSettings {
  LrSchedule lr{LrKind::constant, 0.5};
  double epsilon = 0.1;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::size_t delta0_samples = 1'000'000;
  std::size_t max_rounds = 50;
  /// Growth stops here; the report then shows an unsatisfied bound.
  std::size_t max_iterations = 2'000'000;
  std::size_t seed_average_runs = 30;
};

struct ConvergenceReport {
  double alpha = 0.0;
  double delta0 = 0.0;
  std::size_t iterations = 0;
  double deviation_sum = 0.0;
  double bound = 0.0;
  double mean_grad_norm_sq = 0.0;
  std::size_t rounds = 0;
  double seed_average_grad_norm_sq = 0.0;
  double seed_average_deviation_sum = 0.0;
  LinearSgdRun run;

  bool bound_satisfied() const { return static_cast<double>(iterations) >= bound; }
};

/// Empirical check of the SGD iteration bound on the testbed, starting from
/// theta_0 = 0. The run length T is raised to ceil(bound) until T covers the
/// bound computed from the run's own measured deviation sum. delta0 is the
/// loss at theta_0 on a large fresh sample minus the closed-form minimum.
/// The same T is then replayed on `seed_average_runs` derived seeds.
ConvergenceReport convergence_check(const LinearGaussianProblem& problem, const ConvergenceSettings& settings);

struct DeviationRow {
  std::size_t batch_size = 0;
  double mean_dev_sq = 0.0;
  double p_below = 0.0;
};

/// For each batch size N, draws `trials` independent batches and measures
/// |batch gradient - exact gradient|^2 at `theta`; reports the mean and the
/// fraction of trials at or below `epsilon`. Trial k at size index j uses the
/// seed derive_seed(derive_seed(base_seed, j), k).
std::vector<DeviationRow> gradient_deviation_experiment(const LinearGaussianProblem& problem,
                                                        std::span<const double> theta,
                                                        std::span<const std::size_t> batch_sizes,
                                                        std::size_t trials, double epsilon,
                                                        std::uint64_t base_seed);

using ScalarObjective = std::function<double(std::span<const double>)>;

struct FiniteDifferenceReport {
  double max_error = 0.0;
  std::size_t worst_index = 0;
};

/// Central differences of `objective` at `theta` against `analytic`.
/// Coordinates with |analytic| > 1e-8 use |a - fd| / max(|a|, |fd|); the rest
/// use |a - fd|. Reports the worst coordinate.
FiniteDifferenceReport compare_with_finite_differences(const ScalarObjective& objective,
                                                       std::span<const double> theta,
                                                       std::span<const double> analytic, double step);

/// Finite-difference check of mil_grad_batch over the concatenated
/// (head, marginal) parameter vector.
double finite_difference_check(const ConditionalGaussianHead& head, const MarginalGaussian& marginal,
                               const Dataset& batch, double lambda_ent, double step);

/// Finite-difference check of mse_loss_and_grad.
double finite_difference_check_mse(const ConditionalGaussianHead& head, const Dataset& batch, double step);

struct GradCheckInstance {
  ConditionalGaussianHead head;
  MarginalGaussian marginal;
  Dataset batch;
};

/// Random head (every parameter U(-0.5, 0.5)), random marginal and a batch of
/// standard normal rows, all drawn from `seed`.
GradCheckInstance random_gradcheck_instance(std::size_t input_dim, std::size_t label_dim,
                                            std::vector<std::size_t> hidden, std::size_t batch_size,
                                            std::uint64_t seed);

}  // namespace milr
