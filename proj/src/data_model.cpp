#include "milr/data_model.hpp"

#include <cmath>

namespace milr {

void JointGaussianSpec::validate() const {
  if (n == 0) throw ValidationError("n must be >= 1");
  if (!(rho > 0.0 && rho < 1.0)) {
    throw ValidationError("rho must lie in the open interval (0, 1), got " + std::to_string(rho));
  }
}

std::string to_string(TruthKind kind) {
  switch (kind) {
    case TruthKind::linear: return "linear";
    case TruthKind::quadratic: return "quadratic";
    case TruthKind::sine: return "sine";
  }
  return "unknown";
}

TruthKind truth_kind_from_string(const std::string& name) {
  if (name == "linear") return TruthKind::linear;
  if (name == "quadratic") return TruthKind::quadratic;
  if (name == "sine") return TruthKind::sine;
  throw ValidationError("unknown truth function '" + name + "' (expected linear, quadratic, sine)");
}

void ScalarRegressionSpec::validate() const {
  if (input_dim == 0) throw ValidationError("input_dim must be >= 1");
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) {
    throw ValidationError("noise_sigma must be > 0");
  }
  if (truth == TruthKind::linear) {
    if (beta.size() != input_dim) {
      throw ValidationError("linear truth needs |beta| = input_dim (" + std::to_string(input_dim) +
                            "), got " + std::to_string(beta.size()));
    }
    require_finite(beta, "beta");
  } else if (!beta.empty()) {
    throw ValidationError("beta is only meaningful for the linear truth function");
  }
}

double ScalarRegressionSpec::truth_value(std::span<const double> x) const {
  switch (truth) {
    case TruthKind::linear: return dot(beta, x);
    case TruthKind::quadratic: return squared_norm(x) / static_cast<double>(input_dim);
    case TruthKind::sine: return std::sin(2.0 * kPi * x[0]);
  }
  return 0.0;
}

Dataset::Dataset(std::size_t in_dim, std::size_t lab_dim)
    : input_dim(in_dim), label_dim(lab_dim), inputs(0, in_dim), labels(0, lab_dim) {
  if (in_dim == 0 || lab_dim == 0) throw ValidationError("dataset dimensions must be >= 1");
}

Dataset::Dataset(Matrix in, Matrix lab)
    : input_dim(in.cols()), label_dim(lab.cols()), inputs(std::move(in)), labels(std::move(lab)) {
  validate();
}

void Dataset::append(std::span<const double> x, std::span<const double> y) {
  if (x.size() != input_dim || y.size() != label_dim) {
    throw ValidationError("dataset row dimensions do not match the declared dimensions");
  }
  inputs.append_row(x);
  labels.append_row(y);
}

void Dataset::validate() const {
  if (input_dim == 0 || label_dim == 0) throw ValidationError("dataset dimensions must be >= 1");
  if (inputs.cols() != input_dim || labels.cols() != label_dim) {
    throw ValidationError("dataset matrices disagree with declared dimensions");
  }
  if (inputs.rows() != labels.rows()) {
    throw ValidationError("dataset has " + std::to_string(inputs.rows()) + " input rows but " +
                          std::to_string(labels.rows()) + " label rows");
  }
  require_finite(inputs.data(), "dataset inputs");
  require_finite(labels.data(), "dataset labels");
}

Dataset sample_joint_gaussian(const JointGaussianSpec& spec, std::size_t count, Rng& rng) {
  spec.validate();
  if (count == 0) throw ValidationError("sample count must be >= 1");
  const std::size_t n = spec.n;
  const double noise_scale = std::sqrt(1.0 - spec.rho * spec.rho);
  Matrix inputs(count, n);
  Matrix labels(count, n);
  Vector z(n);
  for (std::size_t i = 0; i < count; ++i) {
    auto y = labels.row(i);
    for (std::size_t k = 0; k < n; ++k) y[k] = rng.standard_normal();
    for (std::size_t k = 0; k < n; ++k) z[k] = rng.standard_normal();
    auto x = inputs.row(i);
    for (std::size_t k = 0; k < n; ++k) x[k] = spec.rho * y[k] + noise_scale * z[k];
  }
  return Dataset(std::move(inputs), std::move(labels));
}

Dataset sample_scalar_regression(const ScalarRegressionSpec& spec, std::size_t count, Rng& rng) {
  spec.validate();
  if (count == 0) throw ValidationError("sample count must be >= 1");
  Matrix inputs(count, spec.input_dim);
  Matrix labels(count, 1);
  for (std::size_t i = 0; i < count; ++i) {
    auto x = inputs.row(i);
    for (auto& v : x) v = rng.standard_normal();
    labels(i, 0) = spec.truth_value(x) + spec.noise_sigma * rng.standard_normal();
  }
  return Dataset(std::move(inputs), std::move(labels));
}

Vector bayes_predict(const JointGaussianSpec& spec, std::span<const double> x) {
  spec.validate();
  if (x.size() != spec.n) {
    throw ValidationError("bayes_predict: |x| = " + std::to_string(x.size()) + ", expected " +
                          std::to_string(spec.n));
  }
  Vector out(x.begin(), x.end());
  for (auto& v : out) v *= spec.rho;
  return out;
}

double bayes_risk(const JointGaussianSpec& spec) {
  spec.validate();
  return static_cast<double>(spec.n) * (1.0 - spec.rho * spec.rho);
}

McEstimate mean_with_std_error(std::span<const double> values) {
  if (values.size() < 2) throw ValidationError("standard error needs at least two samples");
  const double count = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= count;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double variance = ss / (count - 1.0);
  return {mean, std::sqrt(variance / count)};
}

McEstimate population_risk_mc(const Predictor& predictor, const JointGaussianSpec& spec,
                               std::size_t count, Rng& rng) {
  spec.validate();
  if (count < 2) throw ValidationError("population_risk_mc needs count >= 2");
  const Dataset fresh = sample_joint_gaussian(spec, count, rng);
  Vector losses(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Vector prediction = predictor(fresh.input(i));
    const auto y = fresh.label(i);
    if (prediction.size() != y.size()) {
      throw ValidationError("predictor output has the wrong dimension");
    }
    double loss = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) loss += (y[k] - prediction[k]) * (y[k] - prediction[k]);
    losses[i] = loss;
  }
  return mean_with_std_error(losses);
}

}  // namespace milr
