#include <cmath>

#include "doctest.h"
#include "milr/info_bounds.hpp"
#include "milr/sgd_trainer.hpp"

using namespace milr;

namespace {

SgdConfig small_config(std::size_t iterations, double eta, std::uint64_t seed) {
  SgdConfig c;
  c.iterations = iterations;
  c.batch_size = 16;
  c.lr = {LrKind::constant, eta};
  c.seed = seed;
  return c;
}

ConditionalGaussianHead initialized_head(std::size_t in, std::size_t out, std::uint64_t seed) {
  ConditionalGaussianHead head(in, out, {kDefaultHiddenWidth});
  Rng rng(seed);
  head.initialize(rng);
  return head;
}

}  // namespace

TEST_CASE("learning-rate schedules") {
  CHECK(LrSchedule{LrKind::constant, 0.3}.rate(99) == 0.3);
  CHECK(LrSchedule{LrKind::inverse_sqrt, 0.3}.rate(3) == doctest::Approx(0.15));
  CHECK_THROWS_AS((LrSchedule{LrKind::constant, -0.1}.validate()), ValidationError);
}

TEST_CASE("zero iterations rejected, zero rate leaves parameters") {
  const SampleSource source = OnlineJointGaussian{{1, 0.5}};
  const auto head = initialized_head(1, 1, 1);
  CHECK_THROWS_AS(sgd_train(small_config(0, 0.1, 1), source, head, MarginalGaussian(1)), ValidationError);
  const TrainResult r = sgd_train(small_config(1, 0.0, 1), source, head, MarginalGaussian(1));
  CHECK(r.head.flatten() == head.flatten());
  CHECK(r.marginal.flatten() == MarginalGaussian(1).flatten());
  CHECK(r.trace.records.size() == 1);
}

TEST_CASE("training is deterministic per seed") {
  const SampleSource source = OnlineJointGaussian{{2, 0.6}};
  const auto head = initialized_head(2, 2, 3);
  const TrainResult a = sgd_train(small_config(50, 0.05, 9), source, head, MarginalGaussian(2));
  const TrainResult b = sgd_train(small_config(50, 0.05, 9), source, head, MarginalGaussian(2));
  REQUIRE(a.trace.records.size() == b.trace.records.size());
  for (std::size_t t = 0; t < a.trace.records.size(); ++t) {
    CHECK(a.trace.records[t].loss == b.trace.records[t].loss);
    CHECK(a.trace.records[t].grad_norm_sq == b.trace.records[t].grad_norm_sq);
  }
  CHECK(a.head.flatten() == b.head.flatten());
  const TrainResult c = sgd_train(small_config(50, 0.05, 10), source, head, MarginalGaussian(2));
  CHECK(c.head.flatten() != a.head.flatten());
}

TEST_CASE("online sampling never reuses a draw") {
  Rng rng(4);
  BatchSampler sampler(OnlineJointGaussian{{1, 0.5}}, rng);
  CHECK(sampler.online());
  std::size_t last = sampler.stream_position();
  Dataset previous;
  for (int k = 0; k < 20; ++k) {
    const Dataset batch = sampler.next(8);
    CHECK(sampler.stream_position() == last + 8);
    last = sampler.stream_position();
    if (!previous.empty()) CHECK(batch.inputs.data() != previous.inputs.data());
    previous = batch;
  }
  const TrainResult r = sgd_train(small_config(25, 0.05, 1), OnlineJointGaussian{{1, 0.5}},
                                  initialized_head(1, 1, 1), MarginalGaussian(1));
  CHECK(r.trace.samples_drawn == 25 * 16);
}

TEST_CASE("dataset resampling") {
  Rng rng(5);
  const Dataset data = sample_joint_gaussian({1, 0.5}, 30, rng);
  Rng draw(6);
  BatchSampler sampler(DatasetResampling{&data}, draw);
  CHECK_FALSE(sampler.online());
  const Dataset batch = sampler.next(100);
  CHECK(batch.size() == 100);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    bool found = false;
    for (std::size_t j = 0; j < data.size() && !found; ++j) found = data.input(j)[0] == batch.input(i)[0];
    CHECK(found);
  }
}

TEST_CASE("nll trajectory at eta equals mse trajectory at eta / 2") {
  const SampleSource source = OnlineJointGaussian{{2, 0.7}};
  auto head = initialized_head(2, 2, 11);
  head.set_clamp({1.0, 1.0});
  SgdConfig nll = small_config(300, 0.08, 12);
  nll.lambda_ent = 0.0;
  SgdConfig mse = nll;
  mse.lr.eta = nll.lr.eta / 2;
  const TrainResult a = sgd_train(nll, source, head, MarginalGaussian(2));
  const MseTrainResult b = mse_train(mse, source, head);
  for (std::size_t t = 0; t < nll.iterations; ++t) REQUIRE(b.trace.records[t].grad_norm_sq == 4.0 * a.trace.records[t].grad_norm_sq);
  CHECK(a.head.flatten() == b.head.flatten());
}

TEST_CASE("online MIL training recovers the mutual information") {
  SgdConfig config;
  config.seed = 21;
  const SampleSource source = OnlineJointGaussian{{1, 0.8}};
  const TrainResult r = sgd_train(config, source, initialized_head(1, 1, 22), MarginalGaussian(1));
  Rng rng(23);
  const Dataset eval = sample_joint_gaussian({1, 0.8}, 100000, rng);
  const double mi = mil_loss_batch(r.head, r.marginal, eval, 1.0).mi_estimate;
  CHECK(std::abs(mi - mutual_information_exact(1, 0.8)) <= 0.05);
}

TEST_CASE("alpha constant") {
  CHECK(alpha_constant(2.0, {LrKind::constant, 0.5}, 10) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(alpha_constant(1.0, {LrKind::constant, 0.5}, 10) == doctest::Approx(0.375).epsilon(1e-15));
  for (double eta : {0.1, 0.3, 0.49, 0.51, 0.7, 0.9}) CHECK(alpha_constant(2.0, {LrKind::constant, eta}, 5) < 0.25);
  CHECK_THROWS_AS(alpha_constant(1.0, {LrKind::constant, 2.0}, 5), ValidationError);
  CHECK_THROWS_AS(alpha_constant(1.0, {LrKind::constant, 0.0}, 5), ValidationError);
  // eta_t = 1.5 / sqrt(t + 1): the smallest value over t < 4 is at t = 3.
  const double last = 1.5 / 2.0;
  CHECK(alpha_constant(1.0, {LrKind::inverse_sqrt, 1.5}, 4) == doctest::Approx(std::min(1.5 - 0.5 * 1.5 * 1.5, last - 0.5 * last * last)));
}

TEST_CASE("iteration lower bound") {
  CHECK(iteration_lower_bound(10, 2, 0.25, 0.1, 0) == doctest::Approx(400));
  CHECK(iteration_lower_bound(10, 2, 0.25, 0.1, 0.5) == doctest::Approx(420));
  CHECK(iteration_lower_bound(10, 2, 0.25, 0.2, 0.5) == doctest::Approx(210));
  CHECK_THROWS_AS(iteration_lower_bound(10, 2, 0.25, 0.0, 0.5), ValidationError);
  CHECK_THROWS_AS(iteration_lower_bound(-1, 2, 0.25, 0.1, 0.5), ValidationError);
}

TEST_CASE("linear testbed closed forms") {
  const LinearGaussianProblem p{2, {1.0, -2.0}, 0.5};
  const Vector theta{0.0, 0.0};
  CHECK(p.exact_gradient(theta) == Vector{-1.0, 2.0});
  CHECK(p.population_loss(theta) == doctest::Approx(0.5 * (5.0 + 0.25) + kHalfLog2Pi));
  CHECK(p.min_loss() == doctest::Approx(0.5 * 0.25 + kHalfLog2Pi));
  Rng rng(1);
  const Dataset big = p.sample(200000, rng);
  CHECK(std::abs(p.batch_loss(theta, big) - p.population_loss(theta)) < 0.03);
  const Vector g = p.batch_gradient(theta, big);
  CHECK(std::abs(g[0] + 1.0) < 0.02);
  CHECK(std::abs(g[1] - 2.0) < 0.02);
}

TEST_CASE("convergence check on the testbed") {
  ConvergenceSettings s;
  s.seed = 3;
  s.delta0_samples = 200000;
  s.seed_average_runs = 5;
  const ConvergenceReport r = convergence_check(LinearGaussianProblem{}, s);
  CHECK(r.alpha == doctest::Approx(0.375));
  CHECK(r.bound_satisfied());
  CHECK(r.mean_grad_norm_sq <= s.epsilon);
  CHECK(r.seed_average_grad_norm_sq <= s.epsilon);
  CHECK(r.delta0 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("convergence check stops when the bound outgrows the cap") {
  ConvergenceSettings s;
  s.seed = 3;
  s.batch_size = 2;
  s.delta0_samples = 1000;
  s.seed_average_runs = 0;
  s.max_iterations = 5000;
  const ConvergenceReport r = convergence_check(LinearGaussianProblem{}, s);
  CHECK_FALSE(r.bound_satisfied());
}

TEST_CASE("gradient deviation experiment") {
  const LinearGaussianProblem quiet{1, {1.0}, 1e-9};
  const Vector at_optimum{1.0};
  const std::vector<std::size_t> sizes{8};
  CHECK(gradient_deviation_experiment(quiet, at_optimum, sizes, 50, 0.1, 1)[0].mean_dev_sq <= 1e-12);

  const LinearGaussianProblem p{};
  const Vector theta{2.0};
  const std::vector<std::size_t> pair{64, 256};
  const auto rows = gradient_deviation_experiment(p, theta, pair, 2000, 0.05, 2);
  const double ratio = rows[0].mean_dev_sq / rows[1].mean_dev_sq;
  CHECK(ratio >= 3.0);
  CHECK(ratio <= 5.33);

  // Per-sample gradient variance is 2 (theta - beta)^2 + sigma^2 = 3.
  const std::vector<std::size_t> n32{32};
  const double dev = gradient_deviation_experiment(p, theta, n32, 500, 0.05, 3)[0].mean_dev_sq;
  CHECK(std::abs(dev - 3.0 / 32.0) <= 0.25 * 3.0 / 32.0);

  CHECK_THROWS_AS(gradient_deviation_experiment(p, theta, pair, 29, 0.05, 2), ValidationError);
  const std::vector<std::size_t> sizes_again{64, 256};
  const auto again = gradient_deviation_experiment(p, theta, sizes_again, 2000, 0.05, 2);
  CHECK(again[0].mean_dev_sq == rows[0].mean_dev_sq);
}

TEST_CASE("single-density sample size meets the probability guarantee") {
  const LinearGaussianProblem p{};
  const Vector theta{2.0};
  const double eps = 0.05;
  const std::vector<std::size_t> sizes{static_cast<std::size_t>(sample_complexity_lemma42(eps, 0.05, 1.0, 0.1, 1))};
  CHECK(gradient_deviation_experiment(p, theta, sizes, 200, eps, 4)[0].p_below >= 0.95);
}

TEST_CASE("finite difference utilities") {
  const auto inst = random_gradcheck_instance(2, 2, {3}, 6, 7);
  CHECK(finite_difference_check(inst.head, inst.marginal, inst.batch, 1.0, 1e-5) <= 1e-5);

  ConditionalGaussianHead zero(2, 1, {3});
  Dataset stationary(2, 1);
  Rng rng(8);
  for (int i = 0; i < 5; ++i) stationary.append(Vector{rng.standard_normal(), rng.standard_normal()}, Vector{0.0});
  const MilGradient g = mil_grad_batch(zero, MarginalGaussian(1), stationary, 0.0);
  const std::size_t out = zero.parameter_count() - 2;  // output biases (mu, raw)
  CHECK(g.head[out] == 0.0);
  auto objective = [&](std::span<const double> theta) {
    ConditionalGaussianHead h = zero;
    h.unflatten(theta);
    return conditional_ce(h, stationary);
  };
  const Vector theta = zero.flatten();
  Vector plus = theta, minus = theta;
  plus[out] += 1e-5;
  minus[out] -= 1e-5;
  CHECK(std::abs((objective(plus) - objective(minus)) / 2e-5) <= 1e-8);

  int larger = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = random_gradcheck_instance(2, 2, {3}, 6, seed);
    const double coarse = finite_difference_check(r.head, r.marginal, r.batch, 1.0, 1e-2);
    const double fine = finite_difference_check(r.head, r.marginal, r.batch, 1.0, 1e-5);
    larger += coarse > fine;
  }
  CHECK(larger == 10);
}
