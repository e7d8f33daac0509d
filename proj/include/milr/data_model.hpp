#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "milr/core_math.hpp"

namespace milr {

/// Multi-output Gaussian model: Y, Z ~ N(0, I_n) independent and
/// X = rho * Y + sqrt(1 - rho^2) * Z, with rho in the open interval (0, 1).
struct JointGaussianSpec {
  std::size_t n = 1;
  double rho = 0.5;

  void validate() const;
};

enum class TruthKind { linear, quadratic, sine };

std::string to_string(TruthKind kind);
TruthKind truth_kind_from_string(const std::string& name);

/// y = f(x) + e with x ~ N(0, I) and e ~ N(0, noise_sigma^2).
///
///   linear:    f(x) = beta . x
///   quadratic: f(x) = |x|^2 / input_dim
///   sine:      f(x) = sin(2 pi x_1)
struct ScalarRegressionSpec {
  std::size_t input_dim = 1;
  TruthKind truth = TruthKind::linear;
  Vector beta;
  double noise_sigma = 1.0;

  void validate() const;
  double truth_value(std::span<const double> x) const;
};

/// N paired rows of inputs (N x input_dim) and labels (N x label_dim).
struct Dataset {
  std::size_t input_dim = 0;
  std::size_t label_dim = 0;
  Matrix inputs;
  Matrix labels;

  Dataset() = default;
  Dataset(std::size_t input_dim, std::size_t label_dim);
  Dataset(Matrix inputs, Matrix labels);

  std::size_t size() const { return inputs.rows(); }
  bool empty() const { return size() == 0; }
  std::span<const double> input(std::size_t i) const { return inputs.row(i); }
  std::span<const double> label(std::size_t i) const { return labels.row(i); }

  void append(std::span<const double> x, std::span<const double> y);
  void validate() const;
};

/// Each row draws y_1..y_n then z_1..z_n from the stream and stores X as the
/// input and Y as the label.
Dataset sample_joint_gaussian(const JointGaussianSpec& spec, std::size_t count, Rng& rng);

/// Each row draws x_1..x_d then the noise term.
Dataset sample_scalar_regression(const ScalarRegressionSpec& spec, std::size_t count, Rng& rng);

/// E[Y | X = x] = rho * x.
Vector bayes_predict(const JointGaussianSpec& spec, std::span<const double> x);

/// E|Y - rho X|^2 = n (1 - rho^2).
double bayes_risk(const JointGaussianSpec& spec);

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

using Predictor = std::function<Vector(std::span<const double>)>;

/// Monte-Carlo estimate of E|Y - predictor(X)|^2 over fresh draws of the
/// joint model, with the standard error of the mean.
McEstimate population_risk_mc(const Predictor& predictor, const JointGaussianSpec& spec,
                               std::size_t count, Rng& rng);

/// Mean and standard error of the mean of `values` (needs at least two).
McEstimate mean_with_std_error(std::span<const double> values);

}  // namespace milr
