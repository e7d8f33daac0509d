#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "milr/data_model.hpp"

namespace milr {

/// I(X; Y) = (n / 2) log(1 / (1 - rho^2)) nats for the joint Gaussian model.
double mutual_information_exact(std::size_t n, double rho);

/// Monte-Carlo average of log p(y | x) - log p(y) using the model's true
/// conditional N(rho x, (1 - rho^2) I) and marginal N(0, I).
McEstimate mi_plugin_mc(const JointGaussianSpec& spec, std::size_t count, Rng& rng);

/// Fano-type risk lower bound (2 pi e)^((n - 2) / 2) (1 - rho^2)^(n / 2),
/// evaluated in log space.
double fano_bound_paper(std::size_t n, double rho);

/// n (1 - rho^2): the estimation counterpart of Fano's inequality carrying
/// exp(2 h(Y|X)), which coincides with the Bayes risk of the model.
double fano_bound_tight(std::size_t n, double rho);

/// sqrt(1 - 1 / (2 pi e)): below it fano_bound_paper grows without bound in
/// n, above it the bound vanishes, and at it the bound is 1 / (2 pi e).
double threshold_rho();

enum class Regime { diverges, constant, vanishes };

std::string to_string(Regime regime);

struct RegimeLabel {
  Regime regime = Regime::constant;
  double threshold_rho = 0.0;
  /// Per-unit-n increment of log fano_bound_paper: log(2 pi e (1 - rho^2)) / 2.
  double log_slope = 0.0;
};

inline constexpr double kRegimeTolerance = 1e-12;

RegimeLabel asymptotic_regime(double rho);

/// ceil((2 L^2 / (q0^2 t) + 4 L / (3 q0 sqrt t)) log((m + 1) / delta)).
std::uint64_t sample_complexity_lemma42(double t, double delta, double l_tilde, double q0_tilde,
                                        std::size_t m);

struct ComplexityInputs {
  double epsilon = 0.01;
  double delta = 0.05;
  double l_tilde = 1.0;
  double q0_tilde = 0.1;
  double l_bar = 1.0;
  double q0_bar = 0.1;
  double lambda_ent = 1.0;
  std::size_t m = 1;
  std::size_t m_prime = 1;

  void validate() const;
};

struct ComplexityResult {
  std::uint64_t n1 = 0;
  std::uint64_t n2 = 0;
  std::uint64_t n = 0;
};

/// Batch sizes after which the MIL gradient estimate is within epsilon (in
/// squared norm) of the population gradient with probability 1 - delta:
///   N1 = (4 L~^2 / (q0~^2 eps) + 4 sqrt2 L~ / (3 q0~ sqrt eps)) log(2 (m + 1) / delta)
///   N2 = (4 L^2 lam^2 / (q0^2 eps) + 4 sqrt2 L lam / (3 q0 sqrt eps)) log(2 (m' + 1) / delta)
/// with the bar constants in N2; each is rounded up and N = max(N1, N2).
ComplexityResult sample_complexity_thm43(const ComplexityInputs& inputs);

}  // namespace milr
