#include "milr/sgd_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace milr {

void LrSchedule::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ValidationError("learning rate must be a finite value >= 0");
}

double LrSchedule::rate(std::size_t t) const {
  if (kind == LrKind::constant) return eta;
  return eta / std::sqrt(static_cast<double>(t) + 1.0);
}

BatchSampler::BatchSampler(SampleSource source, Rng& rng) : source_(std::move(source)), rng_(rng) {
  if (const auto* online = std::get_if<OnlineJointGaussian>(&source_)) online->spec.validate();
  if (const auto* online = std::get_if<OnlineScalarRegression>(&source_)) online->spec.validate();
  if (const auto* resample = std::get_if<DatasetResampling>(&source_)) {
    if (resample->data == nullptr || resample->data->empty()) {
      throw ValidationError("dataset resampling needs a non-empty dataset");
    }
  }
}

std::size_t BatchSampler::input_dim() const {
  return std::visit(
      [](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, OnlineJointGaussian>) return s.spec.n;
        else if constexpr (std::is_same_v<T, OnlineScalarRegression>) return s.spec.input_dim;
        else return s.data->input_dim;
      },
      source_);
}

std::size_t BatchSampler::label_dim() const {
  return std::visit(
      [](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, OnlineJointGaussian>) return s.spec.n;
        else if constexpr (std::is_same_v<T, OnlineScalarRegression>) return 1;
        else return s.data->label_dim;
      },
      source_);
}

Dataset BatchSampler::next(std::size_t batch_size) {
  if (batch_size == 0) throw ValidationError("batch size must be >= 1");
  position_ += batch_size;
  if (const auto* s = std::get_if<OnlineJointGaussian>(&source_)) {
    return sample_joint_gaussian(s->spec, batch_size, rng_);
  }
  if (const auto* s = std::get_if<OnlineScalarRegression>(&source_)) {
    return sample_scalar_regression(s->spec, batch_size, rng_);
  }
  const Dataset& data = *std::get<DatasetResampling>(source_).data;
  Dataset batch(data.input_dim, data.label_dim);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t row = rng_.index(data.size());
    batch.append(data.input(row), data.label(row));
  }
  return batch;
}

void SgdConfig::validate() const {
  if (iterations == 0) throw ValidationError("iterations must be >= 1");
  if (batch_size == 0) throw ValidationError("batch size must be >= 1");
  lr.validate();
  if (!(lambda_ent >= 0.0) || !std::isfinite(lambda_ent)) throw ValidationError("lambda_ent must be >= 0");
  if (smoothness) alpha_constant(*smoothness, lr, iterations);
}

namespace {

void check_dims(const BatchSampler& sampler, const ConditionalGaussianHead& head) {
  if (sampler.input_dim() != head.input_dim() || sampler.label_dim() != head.label_dim()) {
    throw ValidationError("sample source dimensions do not match the model");
  }
}

void step(Vector& theta, std::span<const double> grad, double rate) {
  for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= rate * grad[j];
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

TrainResult sgd_train(const SgdConfig& config, const SampleSource& source, ConditionalGaussianHead head,
                      MarginalGaussian marginal) {
  config.validate();
  marginal.validate();
  if (marginal.label_dim() != head.label_dim()) throw ValidationError("marginal label dimension mismatch");
  Rng rng(config.seed);
  BatchSampler sampler(source, rng);
  check_dims(sampler, head);

  const auto start = std::chrono::steady_clock::now();
  TrainTrace trace;
  trace.records.reserve(config.iterations);
  Vector theta_head = head.flatten();
  Vector theta_marginal = marginal.flatten();
  for (std::size_t t = 0; t < config.iterations; ++t) {
    const Dataset batch = sampler.next(config.batch_size);
    const LossReport report = mil_loss_batch(head, marginal, batch, config.lambda_ent);
    const MilGradient g = mil_grad_batch(head, marginal, batch, config.lambda_ent);
    const double rate = config.lr.rate(t);
    trace.records.push_back({t, report.mil_loss, squared_norm(g.head) + squared_norm(g.marginal), rate});
    step(theta_head, g.head, rate);
    step(theta_marginal, g.marginal, rate);
    head.unflatten(theta_head);
    marginal.unflatten(theta_marginal);
  }
  trace.samples_drawn = sampler.stream_position();
  trace.wall_seconds = elapsed_seconds(start);
  return {std::move(head), std::move(marginal), std::move(trace)};
}

MseTrainResult mse_train(const SgdConfig& config, const SampleSource& source, ConditionalGaussianHead head) {
  config.validate();
  Rng rng(config.seed);
  BatchSampler sampler(source, rng);
  check_dims(sampler, head);

  const auto start = std::chrono::steady_clock::now();
  TrainTrace trace;
  trace.records.reserve(config.iterations);
  Vector theta = head.flatten();
  for (std::size_t t = 0; t < config.iterations; ++t) {
    const Dataset batch = sampler.next(config.batch_size);
    const MseResult r = mse_loss_and_grad(head, batch);
    const double rate = config.lr.rate(t);
    trace.records.push_back({t, r.loss, squared_norm(r.grad), rate});
    step(theta, r.grad, rate);
    head.unflatten(theta);
  }
  trace.samples_drawn = sampler.stream_position();
  trace.wall_seconds = elapsed_seconds(start);
  return {std::move(head), std::move(trace)};
}

double alpha_constant(double smoothness, const LrSchedule& schedule, std::size_t iterations) {
  if (!(smoothness > 0.0) || !std::isfinite(smoothness)) throw ValidationError("smoothness s must be > 0");
  if (iterations == 0) throw ValidationError("iterations must be >= 1");
  schedule.validate();
  const double upper = 2.0 / smoothness;
  // Both schedules are monotone, so the extremes of eta_t sit at t = 0 and
  // t = T - 1, and the concave objective attains its minimum at one of them.
  const double first = schedule.rate(0);
  const double last = schedule.rate(iterations - 1);
  for (double eta : {first, last}) {
    if (!(eta > 0.0 && eta < upper)) {
      throw ValidationError("step size " + std::to_string(eta) + " outside (0, 2/s) = (0, " +
                            std::to_string(upper) + ")");
    }
  }
  auto descent = [smoothness](double eta) { return eta - 0.5 * smoothness * eta * eta; };
  return std::min(descent(first), descent(last));
}

double iteration_lower_bound(double delta0, double smoothness, double alpha, double epsilon,
                             double deviation_sum) {
  if (!(alpha > 0.0)) throw ValidationError("alpha must be > 0");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  if (!(smoothness > 0.0)) throw ValidationError("smoothness s must be > 0");
  if (!(delta0 >= 0.0)) throw ValidationError("delta0 must be >= 0");
  if (!(deviation_sum >= 0.0)) throw ValidationError("deviation sum must be >= 0");
  return delta0 / (alpha * epsilon) + 2.0 * deviation_sum / (smoothness * alpha * epsilon);
}

void LinearGaussianProblem::validate() const {
  if (dim == 0) throw ValidationError("problem dimension must be >= 1");
  if (beta_star.size() != dim) throw ValidationError("beta_star must have length dim");
  require_finite(beta_star, "beta_star");
  if (!(noise_sigma > 0.0)) throw ValidationError("noise_sigma must be > 0");
}

ScalarRegressionSpec LinearGaussianProblem::regression_spec() const {
  return {dim, TruthKind::linear, beta_star, noise_sigma};
}

Dataset LinearGaussianProblem::sample(std::size_t count, Rng& rng) const {
  validate();
  return sample_scalar_regression(regression_spec(), count, rng);
}

double LinearGaussianProblem::batch_loss(std::span<const double> theta, const Dataset& batch) const {
  if (theta.size() != dim || batch.input_dim != dim || batch.label_dim != 1 || batch.empty()) {
    throw ValidationError("linear problem: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double r = batch.label(i)[0] - dot(theta, batch.input(i));
    acc += 0.5 * r * r;
  }
  return acc / static_cast<double>(batch.size()) + kHalfLog2Pi;
}

Vector LinearGaussianProblem::batch_gradient(std::span<const double> theta, const Dataset& batch) const {
  if (theta.size() != dim || batch.input_dim != dim || batch.label_dim != 1 || batch.empty()) {
    throw ValidationError("linear problem: dimension mismatch");
  }
  Vector g(dim, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto x = batch.input(i);
    const double r = dot(theta, x) - batch.label(i)[0];
    for (std::size_t k = 0; k < dim; ++k) g[k] += r * x[k];
  }
  for (auto& v : g) v /= static_cast<double>(batch.size());
  return g;
}

Vector LinearGaussianProblem::exact_gradient(std::span<const double> theta) const {
  if (theta.size() != dim) throw ValidationError("linear problem: dimension mismatch");
  Vector g(dim);
  for (std::size_t k = 0; k < dim; ++k) g[k] = theta[k] - beta_star[k];
  return g;
}

double LinearGaussianProblem::population_loss(std::span<const double> theta) const {
  const Vector g = exact_gradient(theta);
  return 0.5 * (squared_norm(g) + noise_sigma * noise_sigma) + kHalfLog2Pi;
}

double LinearGaussianProblem::min_loss() const { return 0.5 * noise_sigma * noise_sigma + kHalfLog2Pi; }

LinearSgdRun run_linear_sgd(const LinearGaussianProblem& problem, std::span<const double> theta0,
                            const LrSchedule& lr, std::size_t batch_size, std::size_t iterations,
                            std::uint64_t seed) {
  problem.validate();
  lr.validate();
  if (theta0.size() != problem.dim) throw ValidationError("theta0 must have length dim");
  if (batch_size == 0 || iterations == 0) throw ValidationError("batch size and iterations must be >= 1");
  Rng rng(seed);
  LinearSgdRun run;
  run.theta.assign(theta0.begin(), theta0.end());
  run.records.reserve(iterations);
  run.exact_grad_norm_sq.reserve(iterations);
  run.deviation_sq.reserve(iterations);
  for (std::size_t t = 0; t < iterations; ++t) {
    const Dataset batch = problem.sample(batch_size, rng);
    const Vector g = problem.batch_gradient(run.theta, batch);
    const Vector exact = problem.exact_gradient(run.theta);
    double dev = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) dev += (g[k] - exact[k]) * (g[k] - exact[k]);
    const double rate = lr.rate(t);
    run.records.push_back({t, problem.batch_loss(run.theta, batch), squared_norm(g), rate});
    run.exact_grad_norm_sq.push_back(squared_norm(exact));
    run.deviation_sq.push_back(dev);
    step(run.theta, g, rate);
  }
  return run;
}

namespace {
double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}
double sum_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}
}  // namespace

ConvergenceReport convergence_check(const LinearGaussianProblem& problem, const ConvergenceSettings& settings) {
  problem.validate();
  if (!(settings.epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  if (settings.delta0_samples < 2) throw ValidationError("delta0 sample count must be >= 2");
  const double s = LinearGaussianProblem::kSmoothness;
  const Vector theta0(problem.dim, 0.0);

  ConvergenceReport report;
  {
    Rng rng(derive_seed(settings.seed, 0xde17a0));
    const Dataset big = problem.sample(settings.delta0_samples, rng);
    report.delta0 = std::max(0.0, problem.batch_loss(theta0, big) - problem.min_loss());
  }

  // alpha depends on T only through the schedule; evaluate it at the final T.
  std::size_t iterations = 1;
  report.alpha = alpha_constant(s, settings.lr, iterations);
  iterations = static_cast<std::size_t>(std::ceil(report.delta0 / (report.alpha * settings.epsilon)));
  iterations = std::max<std::size_t>(iterations, 1);
  for (report.rounds = 1; report.rounds <= settings.max_rounds; ++report.rounds) {
    report.alpha = alpha_constant(s, settings.lr, iterations);
    report.run = run_linear_sgd(problem, theta0, settings.lr, settings.batch_size, iterations, settings.seed);
    report.deviation_sum = sum_of(report.run.deviation_sq);
    report.bound = iteration_lower_bound(report.delta0, s, report.alpha, settings.epsilon, report.deviation_sum);
    report.iterations = iterations;
    if (static_cast<double>(iterations) >= report.bound) break;
    if (report.bound > static_cast<double>(settings.max_iterations)) break;
    iterations = static_cast<std::size_t>(std::ceil(report.bound));
  }
  report.rounds = std::min(report.rounds, settings.max_rounds);
  report.mean_grad_norm_sq = mean_of(report.run.exact_grad_norm_sq);

  if (settings.seed_average_runs > 0) {
    double grad_acc = 0.0;
    double dev_acc = 0.0;
    for (std::size_t r = 0; r < settings.seed_average_runs; ++r) {
      const LinearSgdRun run = run_linear_sgd(problem, theta0, settings.lr, settings.batch_size,
                                              report.iterations, derive_seed(settings.seed, r + 1));
      grad_acc += mean_of(run.exact_grad_norm_sq);
      dev_acc += sum_of(run.deviation_sq);
    }
    report.seed_average_grad_norm_sq = grad_acc / static_cast<double>(settings.seed_average_runs);
    report.seed_average_deviation_sum = dev_acc / static_cast<double>(settings.seed_average_runs);
  }
  return report;
}

std::vector<DeviationRow> gradient_deviation_experiment(const LinearGaussianProblem& problem,
                                                        std::span<const double> theta,
                                                        std::span<const std::size_t> batch_sizes,
                                                        std::size_t trials, double epsilon,
                                                        std::uint64_t base_seed) {
  problem.validate();
  if (batch_sizes.empty()) throw ValidationError("batch_sizes must be non-empty");
  if (trials < 30) throw ValidationError("trials must be >= 30");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  if (theta.size() != problem.dim) throw ValidationError("theta must have length dim");
  const Vector exact = problem.exact_gradient(theta);

  std::vector<DeviationRow> rows;
  for (std::size_t j = 0; j < batch_sizes.size(); ++j) {
    const std::size_t n = batch_sizes[j];
    if (n == 0) throw ValidationError("batch sizes must be >= 1");
    const std::uint64_t size_seed = derive_seed(base_seed, j);
    double dev_acc = 0.0;
    std::size_t below = 0;
    for (std::size_t k = 0; k < trials; ++k) {
      Rng rng(derive_seed(size_seed, k));
      const Vector g = problem.batch_gradient(theta, problem.sample(n, rng));
      double dev = 0.0;
      for (std::size_t c = 0; c < g.size(); ++c) dev += (g[c] - exact[c]) * (g[c] - exact[c]);
      dev_acc += dev;
      if (dev <= epsilon) ++below;
    }
    rows.push_back({n, dev_acc / static_cast<double>(trials),
                    static_cast<double>(below) / static_cast<double>(trials)});
  }
  return rows;
}

FiniteDifferenceReport compare_with_finite_differences(const ScalarObjective& objective,
                                                       std::span<const double> theta,
                                                       std::span<const double> analytic, double step) {
  if (!(step > 0.0)) throw ValidationError("finite-difference step must be > 0");
  if (theta.size() != analytic.size()) throw ValidationError("analytic gradient has the wrong length");
  FiniteDifferenceReport report;
  Vector probe(theta.begin(), theta.end());
  for (std::size_t j = 0; j < probe.size(); ++j) {
    const double saved = probe[j];
    probe[j] = saved + step;
    const double up = objective(probe);
    probe[j] = saved - step;
    const double down = objective(probe);
    probe[j] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double a = analytic[j];
    const double err = std::abs(a) > 1e-8 ? std::abs(a - fd) / std::max(std::abs(a), std::abs(fd))
                                          : std::abs(a - fd);
    if (err > report.max_error) {
      report.max_error = err;
      report.worst_index = j;
    }
  }
  return report;
}

double finite_difference_check(const ConditionalGaussianHead& head, const MarginalGaussian& marginal,
                               const Dataset& batch, double lambda_ent, double step) {
  const MilGradient g = mil_grad_batch(head, marginal, batch, lambda_ent);
  Vector theta = head.flatten();
  const std::size_t split = theta.size();
  const Vector theta_marginal = marginal.flatten();
  theta.insert(theta.end(), theta_marginal.begin(), theta_marginal.end());
  Vector analytic = g.head;
  analytic.insert(analytic.end(), g.marginal.begin(), g.marginal.end());

  ConditionalGaussianHead h = head;
  MarginalGaussian m = marginal;
  auto objective = [&](std::span<const double> p) {
    h.unflatten(p.first(split));
    m.unflatten(p.subspan(split));
    return mil_loss_batch(h, m, batch, lambda_ent).mil_loss;
  };
  return compare_with_finite_differences(objective, theta, analytic, step).max_error;
}

double finite_difference_check_mse(const ConditionalGaussianHead& head, const Dataset& batch, double step) {
  const MseResult r = mse_loss_and_grad(head, batch);
  ConditionalGaussianHead h = head;
  auto objective = [&](std::span<const double> p) {
    h.unflatten(p);
    return mse_loss_and_grad(h, batch).loss;
  };
  return compare_with_finite_differences(objective, head.flatten(), r.grad, step).max_error;
}

GradCheckInstance random_gradcheck_instance(std::size_t input_dim, std::size_t label_dim,
                                            std::vector<std::size_t> hidden, std::size_t batch_size,
                                            std::uint64_t seed) {
  if (batch_size == 0) throw ValidationError("batch size must be >= 1");
  Rng rng(seed);
  ConditionalGaussianHead head(input_dim, label_dim, std::move(hidden));
  Vector theta(head.parameter_count());
  for (auto& v : theta) v = rng.uniform(-0.5, 0.5);
  head.unflatten(theta);
  MarginalGaussian marginal(label_dim);
  for (auto& v : marginal.mu) v = rng.uniform(-0.5, 0.5);
  for (auto& v : marginal.raw_sigma) v = rng.uniform(-0.5, 0.5);
  Dataset batch(input_dim, label_dim);
  Vector x(input_dim), y(label_dim);
  for (std::size_t i = 0; i < batch_size; ++i) {
    for (auto& v : x) v = rng.standard_normal();
    for (auto& v : y) v = rng.standard_normal();
    batch.append(x, y);
  }
  return {std::move(head), std::move(marginal), std::move(batch)};
}

}  // namespace milr
