#include "milr/density_models.hpp"

#include <algorithm>
#include <cmath>

namespace milr {

std::string to_string(Activation activation) {
  return activation == Activation::tanh ? "tanh" : "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw ValidationError("unknown activation '" + name + "' (expected tanh or identity)");
}

void SigmaClamp::validate() const {
  if (!(sigma_min > 0.0) || !std::isfinite(sigma_max) || !(sigma_min <= sigma_max)) {
    throw ValidationError("sigma clamp needs 0 < sigma_min <= sigma_max < inf");
  }
}

double SigmaClamp::sigma(double raw) const { return std::clamp(std::exp(raw), sigma_min, sigma_max); }

double SigmaClamp::derivative(double raw) const {
  const double e = std::exp(raw);
  return (e > sigma_min && e < sigma_max) ? e : 0.0;
}

namespace {

double activate(Activation a, double z) { return a == Activation::tanh ? std::tanh(z) : z; }

// Derivative expressed through the activation output.
double activate_derivative(Activation a, double out) {
  return a == Activation::tanh ? 1.0 - out * out : 1.0;
}

}  // namespace

ConditionalGaussianHead::ConditionalGaussianHead(std::size_t input_dim, std::size_t label_dim,
                                                 std::vector<std::size_t> hidden_sizes,
                                                 Activation activation, SigmaClamp clamp)
    : input_dim_(input_dim), label_dim_(label_dim), activation_(activation), clamp_(clamp) {
  if (input_dim == 0 || label_dim == 0) throw ValidationError("head dimensions must be >= 1");
  clamp_.validate();
  std::size_t fan_in = input_dim;
  for (std::size_t width : hidden_sizes) {
    if (width == 0) throw ValidationError("hidden layer sizes must be >= 1");
    layers_.emplace_back(width, fan_in);
    fan_in = width;
  }
  layers_.emplace_back(2 * label_dim, fan_in);
}

ConditionalGaussianHead::ConditionalGaussianHead(std::size_t input_dim, std::size_t label_dim,
                                                 std::vector<DenseLayer> layers, Activation activation,
                                                 SigmaClamp clamp)
    : input_dim_(input_dim), label_dim_(label_dim), activation_(activation), clamp_(clamp),
      layers_(std::move(layers)) {
  if (input_dim == 0 || label_dim == 0) throw ValidationError("head dimensions must be >= 1");
  clamp_.validate();
  if (layers_.empty()) throw ValidationError("head needs at least one layer");
  std::size_t fan_in = input_dim;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.cols != fan_in) {
      throw ValidationError("layer " + std::to_string(l) + " expects " + std::to_string(layer.cols) +
                            " inputs but receives " + std::to_string(fan_in));
    }
    if (layer.rows == 0 || layer.weights.size() != layer.rows * layer.cols ||
        layer.bias.size() != layer.rows) {
      throw ValidationError("layer " + std::to_string(l) + " has inconsistent parameter sizes");
    }
    require_finite(layer.weights, "layer weights");
    require_finite(layer.bias, "layer bias");
    fan_in = layer.rows;
  }
  if (fan_in != 2 * label_dim) {
    throw ValidationError("final layer must emit 2 * label_dim = " + std::to_string(2 * label_dim) +
                          " values, emits " + std::to_string(fan_in));
  }
}

void ConditionalGaussianHead::initialize(Rng& rng) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    if (l + 1 == layers_.size()) {
      std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.rows + layer.cols));
    for (auto& w : layer.weights) w = rng.uniform(-bound, bound);
  }
}

void ConditionalGaussianHead::set_clamp(SigmaClamp clamp) {
  clamp.validate();
  clamp_ = clamp;
}

std::vector<std::size_t> ConditionalGaussianHead::hidden_sizes() const {
  std::vector<std::size_t> sizes;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) sizes.push_back(layers_[l].rows);
  return sizes;
}

std::size_t ConditionalGaussianHead::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers_) count += layer.parameter_count();
  return count;
}

Vector ConditionalGaussianHead::flatten() const {
  Vector theta;
  theta.reserve(parameter_count());
  for (const auto& layer : layers_) {
    theta.insert(theta.end(), layer.weights.begin(), layer.weights.end());
    theta.insert(theta.end(), layer.bias.begin(), layer.bias.end());
  }
  return theta;
}

void ConditionalGaussianHead::unflatten(std::span<const double> theta) {
  if (theta.size() != parameter_count()) {
    throw ValidationError("parameter vector has " + std::to_string(theta.size()) + " entries, head has " +
                          std::to_string(parameter_count()));
  }
  require_finite(theta, "head parameters");
  auto it = theta.begin();
  for (auto& layer : layers_) {
    std::copy_n(it, layer.weights.size(), layer.weights.begin());
    it += static_cast<std::ptrdiff_t>(layer.weights.size());
    std::copy_n(it, layer.bias.size(), layer.bias.begin());
    it += static_cast<std::ptrdiff_t>(layer.bias.size());
  }
}

void ConditionalGaussianHead::check_input(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw ValidationError("input has dimension " + std::to_string(x.size()) + ", head expects " +
                          std::to_string(input_dim_));
  }
  require_finite(x, "input");
}

void ConditionalGaussianHead::check_label(std::span<const double> y) const {
  if (y.size() != label_dim_) {
    throw ValidationError("label has dimension " + std::to_string(y.size()) + ", head expects " +
                          std::to_string(label_dim_));
  }
  require_finite(y, "label");
}

ForwardTrace ConditionalGaussianHead::trace(std::span<const double> x) const {
  check_input(x);
  ForwardTrace t;
  t.activations.reserve(layers_.size());
  t.activations.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const Vector& in = t.activations.back();
    Vector out(layer.bias);
    for (std::size_t r = 0; r < layer.rows; ++r) {
      const double* w = layer.weights.data() + r * layer.cols;
      double acc = 0.0;
      for (std::size_t c = 0; c < layer.cols; ++c) acc += w[c] * in[c];
      out[r] += acc;
    }
    if (l + 1 == layers_.size()) {
      t.output = std::move(out);
    } else {
      for (auto& v : out) v = activate(activation_, v);
      t.activations.push_back(std::move(out));
    }
  }
  t.params.mu.assign(t.output.begin(), t.output.begin() + static_cast<std::ptrdiff_t>(label_dim_));
  t.params.sigma.resize(label_dim_);
  for (std::size_t k = 0; k < label_dim_; ++k) t.params.sigma[k] = clamp_.sigma(t.output[label_dim_ + k]);
  return t;
}

GaussianParams ConditionalGaussianHead::forward(std::span<const double> x) const {
  return trace(x).params;
}

void ConditionalGaussianHead::backward(const ForwardTrace& t, std::span<const double> d_mu,
                                       std::span<const double> d_sigma, std::span<double> grad) const {
  if (d_mu.size() != label_dim_ || d_sigma.size() != label_dim_ || grad.size() != parameter_count()) {
    throw ValidationError("backward: gradient buffer sizes do not match the head");
  }
  Vector delta(2 * label_dim_);
  for (std::size_t k = 0; k < label_dim_; ++k) {
    delta[k] = d_mu[k];
    delta[label_dim_ + k] = d_sigma[k] * clamp_.derivative(t.output[label_dim_ + k]);
  }

  std::vector<std::size_t> offsets(layers_.size());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    offsets[l] = offset;
    offset += layers_[l].parameter_count();
  }

  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const Vector& in = t.activations[l];
    double* g_w = grad.data() + offsets[l];
    double* g_b = g_w + layer.weights.size();
    for (std::size_t r = 0; r < layer.rows; ++r) {
      const double d = delta[r];
      for (std::size_t c = 0; c < layer.cols; ++c) g_w[r * layer.cols + c] += d * in[c];
      g_b[r] += d;
    }
    if (l == 0) break;
    Vector prev(layer.cols, 0.0);
    for (std::size_t r = 0; r < layer.rows; ++r) {
      const double d = delta[r];
      const double* w = layer.weights.data() + r * layer.cols;
      for (std::size_t c = 0; c < layer.cols; ++c) prev[c] += w[c] * d;
    }
    for (std::size_t c = 0; c < layer.cols; ++c) prev[c] *= activate_derivative(activation_, in[c]);
    delta = std::move(prev);
  }
}

double ConditionalGaussianHead::log_density(std::span<const double> x, std::span<const double> y) const {
  check_label(y);
  return diagonal_log_density(forward(x), y);
}

Vector ConditionalGaussianHead::negative_log_density_gradient(std::span<const double> x,
                                                              std::span<const double> y) const {
  check_label(y);
  const ForwardTrace t = trace(x);
  Vector d_mu(label_dim_), d_sigma(label_dim_);
  for (std::size_t k = 0; k < label_dim_; ++k) {
    const double s = t.params.sigma[k];
    const double r = t.params.mu[k] - y[k];
    d_mu[k] = r / (s * s);
    d_sigma[k] = 1.0 / s - r * r / (s * s * s);
  }
  Vector grad(parameter_count(), 0.0);
  backward(t, d_mu, d_sigma, grad);
  return grad;
}

Vector ConditionalGaussianHead::predict(std::span<const double> x) const { return forward(x).mu; }

MarginalGaussian::MarginalGaussian(std::size_t label_dim, SigmaClamp c)
    : mu(label_dim, 0.0), raw_sigma(label_dim, 0.0), clamp(c) {
  if (label_dim == 0) throw ValidationError("marginal label_dim must be >= 1");
  clamp.validate();
}

Vector MarginalGaussian::flatten() const {
  Vector theta(mu);
  theta.insert(theta.end(), raw_sigma.begin(), raw_sigma.end());
  return theta;
}

void MarginalGaussian::unflatten(std::span<const double> theta) {
  if (theta.size() != parameter_count()) {
    throw ValidationError("marginal parameter vector has the wrong length");
  }
  require_finite(theta, "marginal parameters");
  const std::size_t d = label_dim();
  std::copy_n(theta.begin(), d, mu.begin());
  std::copy_n(theta.begin() + static_cast<std::ptrdiff_t>(d), d, raw_sigma.begin());
}

void MarginalGaussian::validate() const {
  if (mu.empty() || mu.size() != raw_sigma.size()) {
    throw ValidationError("marginal needs equal, non-zero mu and raw_sigma lengths");
  }
  require_finite(mu, "marginal mu");
  require_finite(raw_sigma, "marginal raw_sigma");
  clamp.validate();
}

double MarginalGaussian::log_density(std::span<const double> y) const {
  return marginal_log_density_and_grad(*this, y).log_density;
}

LogDensityGradient marginal_log_density_and_grad(const MarginalGaussian& marginal,
                                                 std::span<const double> y) {
  const std::size_t d = marginal.label_dim();
  if (y.size() != d) {
    throw ValidationError("label has dimension " + std::to_string(y.size()) + ", marginal expects " +
                          std::to_string(d));
  }
  LogDensityGradient out;
  out.grad.assign(2 * d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double s = marginal.sigma(k);
    const double r = marginal.mu[k] - y[k];
    out.log_density += gaussian_logpdf(y[k], marginal.mu[k], s);
    out.grad[k] = r / (s * s);
    out.grad[d + k] = (1.0 / s - r * r / (s * s * s)) * marginal.clamp.derivative(marginal.raw_sigma[k]);
  }
  return out;
}

double diagonal_log_density(const GaussianParams& params, std::span<const double> y) {
  if (y.size() != params.mu.size()) throw ValidationError("label dimension mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) acc += gaussian_logpdf(y[k], params.mu[k], params.sigma[k]);
  return acc;
}

double mixture_log_density(std::span<const GaussianParams> components, std::span<const double> y) {
  if (components.empty()) throw ValidationError("mixture needs at least one component");
  Vector logs(components.size());
  for (std::size_t i = 0; i < components.size(); ++i) logs[i] = diagonal_log_density(components[i], y);
  return logsumexp(logs) - std::log(static_cast<double>(components.size()));
}

double mixture_marginal_log_density(const ConditionalGaussianHead& head, const Matrix& batch_inputs,
                                    std::span<const double> y) {
  if (batch_inputs.rows() == 0) throw ValidationError("mixture marginal needs a non-empty batch");
  std::vector<GaussianParams> components;
  components.reserve(batch_inputs.rows());
  for (std::size_t i = 0; i < batch_inputs.rows(); ++i) components.push_back(head.forward(batch_inputs.row(i)));
  return mixture_log_density(components, y);
}

}  // namespace milr
