#pragma once

#include <cstddef>
#include <variant>

#include "milr/data_model.hpp"
#include "milr/density_models.hpp"

namespace milr {

/// Weight-shared marginal: q(y) = (1/N) sum_i q(y | x_i) over the batch being
/// scored. Carries no parameters of its own.
struct MixtureMarginal {};

using MarginalChoice = std::variant<MarginalGaussian, MixtureMarginal>;

/// All quantities in nats.
struct LossReport {
  double conditional_ce = 0.0;
  double marginal_ce = 0.0;
  double mil_loss = 0.0;     // conditional_ce + lambda_ent * marginal_ce
  double mi_estimate = 0.0;  // marginal_ce - conditional_ce
  double lambda_ent = 1.0;
};

inline constexpr double kDefaultLambdaEnt = 1.0;

/// (1/N) sum_i -log q(y_i | x_i).
double conditional_ce(const ConditionalGaussianHead& head, const Dataset& batch);

/// (1/N) sum_j -log q(y_j), with q the parametric marginal or the batch mixture.
double marginal_ce(const MarginalChoice& choice, const ConditionalGaussianHead& head, const Dataset& batch);

LossReport mil_loss_batch(const ConditionalGaussianHead& head, const MarginalChoice& choice,
                          const Dataset& batch, double lambda_ent);

struct MilGradient {
  Vector head;
  Vector marginal;
};

/// Exact gradient of mil_loss_batch with a parametric marginal, as the batch
/// mean of per-example gradients.
MilGradient mil_grad_batch(const ConditionalGaussianHead& head, const MarginalGaussian& marginal,
                           const Dataset& batch, double lambda_ent);

struct MseResult {
  double loss = 0.0;
  Vector grad;
};

/// (1/N) sum_i |mu(x_i) - y_i|^2 and its gradient. The sigma outputs get no
/// gradient.
MseResult mse_loss_and_grad(const ConditionalGaussianHead& head, const Dataset& batch);

/// label_dim * log(2 pi) / 2: with sigma == 1, conditional_ce = mse / 2 + offset.
double nll_mse_offset(std::size_t label_dim);

/// marginal_ce - conditional_ce over the whole dataset.
double mi_estimate(const ConditionalGaussianHead& head, const MarginalChoice& choice, const Dataset& data);

}  // namespace milr
