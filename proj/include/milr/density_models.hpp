#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "milr/core_math.hpp"

namespace milr {

enum class Activation { tanh, identity };

std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

inline constexpr double kDefaultSigmaMin = 1e-3;
inline constexpr double kDefaultSigmaMax = 1e3;

/// sigma = clamp(exp(raw), sigma_min, sigma_max). The derivative with
/// respect to raw is exp(raw) strictly inside (sigma_min, sigma_max) and zero
/// elsewhere, so setting sigma_min == sigma_max pins sigma.
struct SigmaClamp {
  double sigma_min = kDefaultSigmaMin;
  double sigma_max = kDefaultSigmaMax;

  void validate() const;
  double sigma(double raw) const;
  /// d sigma / d raw.
  double derivative(double raw) const;
};

/// Fully connected layer y = W x + b with W stored row-major (rows = outputs).
struct DenseLayer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vector weights;
  Vector bias;

  DenseLayer() = default;
  DenseLayer(std::size_t out, std::size_t in) : rows(out), cols(in), weights(out * in, 0.0), bias(out, 0.0) {}
  std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

/// Per-example parameters of a diagonal Gaussian.
struct GaussianParams {
  Vector mu;
  Vector sigma;
};

/// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardTrace {
  std::vector<Vector> activations;  // activations[0] is the input
  Vector output;                    // final linear layer: (mu, raw)
  GaussianParams params;
};

/// MLP that maps x to a diagonal Gaussian q(y | x) = N(mu(x), diag sigma(x)^2).
/// Hidden layers apply the activation; the final layer is linear and emits
/// 2 * label_dim values read as (mu, raw) with sigma = clamp(exp(raw)).
///
/// Parameters flatten layer by layer, each layer as its row-major weights
/// followed by its bias.
class ConditionalGaussianHead {
 public:
  ConditionalGaussianHead() = default;
  /// All parameters start at zero, which gives q(y | x) = N(0, I).
  ConditionalGaussianHead(std::size_t input_dim, std::size_t label_dim,
                          std::vector<std::size_t> hidden_sizes,
                          Activation activation = Activation::tanh, SigmaClamp clamp = {});
  /// Builds a head from explicit layers; validates the shapes chain.
  ConditionalGaussianHead(std::size_t input_dim, std::size_t label_dim, std::vector<DenseLayer> layers,
                          Activation activation, SigmaClamp clamp);

  /// Hidden weights ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); all
  /// biases and the output layer are zero.
  void initialize(Rng& rng);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t label_dim() const { return label_dim_; }
  Activation activation() const { return activation_; }
  const SigmaClamp& clamp() const { return clamp_; }
  void set_clamp(SigmaClamp clamp);
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  std::vector<std::size_t> hidden_sizes() const;

  std::size_t parameter_count() const;
  Vector flatten() const;
  void unflatten(std::span<const double> theta);

  GaussianParams forward(std::span<const double> x) const;
  ForwardTrace trace(std::span<const double> x) const;

  /// Adds to `grad` the parameter gradient of a scalar whose partial
  /// derivatives with respect to mu and sigma at `trace` are `d_mu` and
  /// `d_sigma`. Clamped sigma components pass no gradient.
  void backward(const ForwardTrace& trace, std::span<const double> d_mu,
                std::span<const double> d_sigma, std::span<double> grad) const;

  /// sum_k log N(y_k; mu_k(x), sigma_k(x)^2).
  double log_density(std::span<const double> x, std::span<const double> y) const;
  /// Gradient of -log_density with respect to the flattened parameters.
  Vector negative_log_density_gradient(std::span<const double> x, std::span<const double> y) const;
  /// The maximum-likelihood point prediction mu(x).
  Vector predict(std::span<const double> x) const;

 private:
  void check_input(std::span<const double> x) const;
  void check_label(std::span<const double> y) const;

  std::size_t input_dim_ = 0;
  std::size_t label_dim_ = 0;
  Activation activation_ = Activation::tanh;
  SigmaClamp clamp_;
  std::vector<DenseLayer> layers_;
};

/// Input-independent diagonal Gaussian q(y) = N(mu, diag sigma^2) with
/// sigma = clamp(exp(raw_sigma)). Flattens as (mu, raw_sigma).
struct MarginalGaussian {
  Vector mu;
  Vector raw_sigma;
  SigmaClamp clamp;

  MarginalGaussian() = default;
  /// Standard normal of dimension `label_dim`.
  explicit MarginalGaussian(std::size_t label_dim, SigmaClamp clamp = {});

  std::size_t label_dim() const { return mu.size(); }
  std::size_t parameter_count() const { return 2 * mu.size(); }
  double sigma(std::size_t k) const { return clamp.sigma(raw_sigma[k]); }
  Vector flatten() const;
  void unflatten(std::span<const double> theta);
  void validate() const;

  double log_density(std::span<const double> y) const;
};

struct LogDensityGradient {
  double log_density = 0.0;
  Vector grad;  // gradient of -log_density
};

LogDensityGradient marginal_log_density_and_grad(const MarginalGaussian& marginal,
                                                 std::span<const double> y);

/// log sum_k N(y_k; mu_k, sigma_k^2) for one component.
double diagonal_log_density(const GaussianParams& params, std::span<const double> y);

/// log((1/N) sum_i q(y | x_i)) over the rows of `batch_inputs`.
double mixture_marginal_log_density(const ConditionalGaussianHead& head, const Matrix& batch_inputs,
                                    std::span<const double> y);

/// Same mixture evaluated from precomputed per-row Gaussian parameters.
double mixture_log_density(std::span<const GaussianParams> components, std::span<const double> y);

}  // namespace milr
