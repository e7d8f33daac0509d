#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace milr {

/// Raised when an argument violates a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when reading or writing an external artifact fails.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vector = std::vector<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// Dense row-major matrix of finite doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of row-major `data`; throws ValidationError on a size
  /// mismatch or a non-finite entry.
  Matrix(std::size_t rows, std::size_t cols, Vector data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  void append_row(std::span<const double> values);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

/// SplitMix64 finalizer. Used to expand seeds and to derive per-trial seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for the `index`-th independent stream under `base_seed`.
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index);

/// xoshiro256** (Blackman & Vigna, 2018) with its four state words filled
/// by successive SplitMix64 outputs of the seed. The output stream is a pure
/// function of the seed and is fixed across versions of this library.
///
/// Gaussian draws use the Box-Muller transform and consume both variates:
/// the second is cached and returned by the next call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double standard_normal();
  /// N(mu, sigma^2); sigma must be positive.
  double gaussian(double mu, double sigma);
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// log N(y; mu, sigma^2).
double gaussian_logpdf(double y, double mu, double sigma);

/// log sum_i exp(values_i), shifted by the maximum.
double logsumexp(std::span<const double> values);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

/// Throws ValidationError with `what` if `v` contains NaN or Inf.
void require_finite(std::span<const double> v, const std::string& what);

}  // namespace milr
