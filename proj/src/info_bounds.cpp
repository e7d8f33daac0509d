#include "milr/info_bounds.hpp"

#include <cmath>
#include <limits>

namespace milr {

namespace {

constexpr double kLogTwoPiE = 2.83787706640934548356;  // log(2 pi e)

void check_domain(std::size_t n, double rho) {
  if (n == 0) throw ValidationError("n must be >= 1");
  if (!(rho > 0.0 && rho < 1.0)) {
    throw ValidationError("rho must lie in the open interval (0, 1), got " + std::to_string(rho));
  }
}

void check_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be a finite value > 0");
}

std::uint64_t ceil_count(double v) {
  if (!(v < 1.8e19)) throw ValidationError("sample complexity overflows a 64-bit count");
  return static_cast<std::uint64_t>(std::ceil(v));
}

}  // namespace

double mutual_information_exact(std::size_t n, double rho) {
  check_domain(n, rho);
  return -0.5 * static_cast<double>(n) * std::log1p(-rho * rho);
}

McEstimate mi_plugin_mc(const JointGaussianSpec& spec, std::size_t count, Rng& rng) {
  spec.validate();
  if (count < 2) throw ValidationError("mi_plugin_mc needs count >= 2");
  const Dataset data = sample_joint_gaussian(spec, count, rng);
  const double cond_sigma = std::sqrt(1.0 - spec.rho * spec.rho);
  Vector ratios(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto x = data.input(i);
    const auto y = data.label(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < spec.n; ++k) {
      acc += gaussian_logpdf(y[k], spec.rho * x[k], cond_sigma) - gaussian_logpdf(y[k], 0.0, 1.0);
    }
    ratios[i] = acc;
  }
  return mean_with_std_error(ratios);
}

double fano_bound_paper(std::size_t n, double rho) {
  check_domain(n, rho);
  const double nd = static_cast<double>(n);
  const double log_b = 0.5 * (nd - 2.0) * kLogTwoPiE + 0.5 * nd * std::log1p(-rho * rho);
  return std::exp(log_b);
}

double fano_bound_tight(std::size_t n, double rho) {
  check_domain(n, rho);
  return static_cast<double>(n) * (1.0 - rho * rho);
}

double threshold_rho() { return std::sqrt(1.0 - std::exp(-kLogTwoPiE)); }

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::diverges: return "diverges";
    case Regime::constant: return "constant";
    case Regime::vanishes: return "vanishes";
  }
  return "unknown";
}

RegimeLabel asymptotic_regime(double rho) {
  check_domain(1, rho);
  RegimeLabel label;
  label.threshold_rho = threshold_rho();
  label.log_slope = 0.5 * (kLogTwoPiE + std::log1p(-rho * rho));
  if (label.log_slope > kRegimeTolerance) {
    label.regime = Regime::diverges;
  } else if (label.log_slope < -kRegimeTolerance) {
    label.regime = Regime::vanishes;
  } else {
    label.regime = Regime::constant;
  }
  return label;
}

std::uint64_t sample_complexity_lemma42(double t, double delta, double l_tilde, double q0_tilde,
                                        std::size_t m) {
  check_positive(t, "t");
  check_positive(delta, "delta");
  check_positive(l_tilde, "L_tilde");
  check_positive(q0_tilde, "q0_tilde");
  if (!(delta < 1.0)) throw ValidationError("delta must be < 1");
  if (m == 0) throw ValidationError("m must be >= 1");
  const double lead = 2.0 * l_tilde * l_tilde / (q0_tilde * q0_tilde * t) +
                      4.0 * l_tilde / (3.0 * q0_tilde * std::sqrt(t));
  return ceil_count(lead * std::log((static_cast<double>(m) + 1.0) / delta));
}

void ComplexityInputs::validate() const {
  check_positive(epsilon, "epsilon");
  check_positive(delta, "delta");
  check_positive(l_tilde, "L_tilde");
  check_positive(q0_tilde, "q0_tilde");
  check_positive(l_bar, "L_bar");
  check_positive(q0_bar, "q0_bar");
  if (!(delta < 1.0)) throw ValidationError("delta must be < 1");
  if (!(lambda_ent >= 0.0) || !std::isfinite(lambda_ent)) throw ValidationError("lambda_ent must be >= 0");
  if (m == 0 || m_prime == 0) throw ValidationError("m and m_prime must be >= 1");
}

ComplexityResult sample_complexity_thm43(const ComplexityInputs& in) {
  in.validate();
  const double root_eps = std::sqrt(in.epsilon);
  const double sqrt2 = std::sqrt(2.0);
  const double lead1 = 4.0 * in.l_tilde * in.l_tilde / (in.q0_tilde * in.q0_tilde * in.epsilon) +
                       4.0 * sqrt2 * in.l_tilde / (3.0 * in.q0_tilde * root_eps);
  const double lead2 =
      4.0 * in.l_bar * in.l_bar * in.lambda_ent * in.lambda_ent / (in.q0_bar * in.q0_bar * in.epsilon) +
      4.0 * sqrt2 * in.l_bar * in.lambda_ent / (3.0 * in.q0_bar * root_eps);
  ComplexityResult r;
  r.n1 = ceil_count(lead1 * std::log(2.0 * (static_cast<double>(in.m) + 1.0) / in.delta));
  r.n2 = ceil_count(lead2 * std::log(2.0 * (static_cast<double>(in.m_prime) + 1.0) / in.delta));
  r.n = std::max(r.n1, r.n2);
  return r;
}

}  // namespace milr
