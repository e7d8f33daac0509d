#include "milr/mil_loss.hpp"

#include <cmath>

namespace milr {

namespace {

void check_batch(const ConditionalGaussianHead& head, const Dataset& batch) {
  if (batch.empty()) throw ValidationError("batch must be non-empty");
  if (batch.input_dim != head.input_dim() || batch.label_dim != head.label_dim()) {
    throw ValidationError("batch dimensions (" + std::to_string(batch.input_dim) + ", " +
                          std::to_string(batch.label_dim) + ") do not match the head (" +
                          std::to_string(head.input_dim()) + ", " + std::to_string(head.label_dim()) + ")");
  }
}

void check_lambda(double lambda_ent) {
  if (!(lambda_ent >= 0.0) || !std::isfinite(lambda_ent)) {
    throw ValidationError("lambda_ent must be a finite value >= 0");
  }
}

}  // namespace

double conditional_ce(const ConditionalGaussianHead& head, const Dataset& batch) {
  check_batch(head, batch);
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) acc -= head.log_density(batch.input(i), batch.label(i));
  return acc / static_cast<double>(batch.size());
}

double marginal_ce(const MarginalChoice& choice, const ConditionalGaussianHead& head, const Dataset& batch) {
  check_batch(head, batch);
  double acc = 0.0;
  if (const auto* marginal = std::get_if<MarginalGaussian>(&choice)) {
    if (marginal->label_dim() != batch.label_dim) throw ValidationError("marginal label dimension mismatch");
    for (std::size_t j = 0; j < batch.size(); ++j) acc -= marginal->log_density(batch.label(j));
  } else {
    std::vector<GaussianParams> components;
    components.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) components.push_back(head.forward(batch.input(i)));
    for (std::size_t j = 0; j < batch.size(); ++j) acc -= mixture_log_density(components, batch.label(j));
  }
  return acc / static_cast<double>(batch.size());
}

LossReport mil_loss_batch(const ConditionalGaussianHead& head, const MarginalChoice& choice,
                          const Dataset& batch, double lambda_ent) {
  check_lambda(lambda_ent);
  LossReport report;
  report.lambda_ent = lambda_ent;
  report.conditional_ce = conditional_ce(head, batch);
  report.marginal_ce = marginal_ce(choice, head, batch);
  report.mil_loss = report.conditional_ce + lambda_ent * report.marginal_ce;
  report.mi_estimate = report.marginal_ce - report.conditional_ce;
  return report;
}

MilGradient mil_grad_batch(const ConditionalGaussianHead& head, const MarginalGaussian& marginal,
                           const Dataset& batch, double lambda_ent) {
  check_batch(head, batch);
  check_lambda(lambda_ent);
  if (marginal.label_dim() != head.label_dim()) throw ValidationError("marginal label dimension mismatch");

  const std::size_t d = head.label_dim();
  MilGradient g{Vector(head.parameter_count(), 0.0), Vector(marginal.parameter_count(), 0.0)};
  Vector d_mu(d), d_sigma(d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ForwardTrace t = head.trace(batch.input(i));
    const auto y = batch.label(i);
    for (std::size_t k = 0; k < d; ++k) {
      const double s = t.params.sigma[k];
      const double r = t.params.mu[k] - y[k];
      d_mu[k] = r / (s * s);
      d_sigma[k] = 1.0 / s - r * r / (s * s * s);
    }
    head.backward(t, d_mu, d_sigma, g.head);
    if (lambda_ent != 0.0) {
      const Vector mg = marginal_log_density_and_grad(marginal, y).grad;
      for (std::size_t j = 0; j < mg.size(); ++j) g.marginal[j] += mg[j];
    }
  }
  const double count = static_cast<double>(batch.size());
  for (auto& v : g.head) v /= count;
  for (auto& v : g.marginal) v = lambda_ent * (v / count);
  return g;
}

MseResult mse_loss_and_grad(const ConditionalGaussianHead& head, const Dataset& batch) {
  check_batch(head, batch);
  const std::size_t d = head.label_dim();
  MseResult out{0.0, Vector(head.parameter_count(), 0.0)};
  Vector d_mu(d);
  const Vector d_sigma(d, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ForwardTrace t = head.trace(batch.input(i));
    const auto y = batch.label(i);
    for (std::size_t k = 0; k < d; ++k) {
      const double r = t.params.mu[k] - y[k];
      out.loss += r * r;
      d_mu[k] = 2.0 * r;
    }
    head.backward(t, d_mu, d_sigma, out.grad);
  }
  const double count = static_cast<double>(batch.size());
  out.loss /= count;
  for (auto& v : out.grad) v /= count;
  return out;
}

double nll_mse_offset(std::size_t label_dim) {
  if (label_dim == 0) throw ValidationError("label_dim must be >= 1");
  return static_cast<double>(label_dim) * kHalfLog2Pi;
}

double mi_estimate(const ConditionalGaussianHead& head, const MarginalChoice& choice, const Dataset& data) {
  return marginal_ce(choice, head, data) - conditional_ce(head, data);
}

}  // namespace milr
