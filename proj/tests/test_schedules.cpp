#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fahmc/schedules.hpp"

using namespace fahmc;

namespace {

StepsizeProblem<double> base_problem() {
  StepsizeProblem<double> p;
  p.epsilon = 0.3;
  p.dim = 100;
  p.local_steps = 10;
  p.leapfrog_steps = 5;
  p.L = 1;
  p.rho = 0;
  p.nodes = 10;
  p.sigma_g = 0;
  p.weights.assign(10, 0.1);
  return p;
}

}  // namespace

TEST(TheoremStepsize, VanillaSettingDropsMomentumAndNoiseTerms) {
  auto p = base_problem();
  p.rho = 1;
  p.sigma_g = 0;
  const double K = 5, T = 10, d = 100;
  const double expect =
      std::min(1 / (K * K * p.L), p.epsilon / (K * K * std::sqrt(d) * T));
  EXPECT_DOUBLE_EQ(std::pow(theorem_stepsize(p), 2), expect);
}

TEST(TheoremStepsize, LargeEpsilonHitsSmoothnessCap) {
  auto p = base_problem();
  p.epsilon = 1e12;
  p.sigma_g = 3;
  p.L = 2;
  EXPECT_DOUBLE_EQ(std::pow(theorem_stepsize(p), 2), 1 / (25.0 * 2));
}

TEST(TheoremStepsize, ArithmeticOracle) {
  const auto p = base_problem();
  // Terms written out by hand for d=100, T=10, K=5, L=1, ρ=0, N=10, ε=0.3.
  const double t1 = 1.0 / 25.0;
  const double t2 = 0.3 / (25.0 * 10.0 * 10.0);
  const double t3 = 0.09 / (25.0 * 100.0 * 100.0 * 10.0);
  EXPECT_DOUBLE_EQ(theorem_stepsize(p), std::sqrt(std::min({t1, t2, t3})));
  auto q = p;
  q.C = 4;
  EXPECT_DOUBLE_EQ(theorem_stepsize(q), 2 * theorem_stepsize(p));
}

TEST(TheoremStepsize, NoiseTerm) {
  auto p = base_problem();
  p.rho = 1;
  p.epsilon = 1;
  p.sigma_g = 10;
  const double w2 = 10 * 0.01;
  const double noise_term = 1.0 / (5 * 100 * w2 * 100);
  const double expect =
      std::min({1 / 25.0, 1 / (25.0 * 10 * 10), noise_term});
  EXPECT_DOUBLE_EQ(std::pow(theorem_stepsize(p), 2), expect);
}

TEST(TheoremStepsize, DirectionalMonotonicity) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    StepsizeProblem<double> p;
    p.epsilon = std::exp(4 * u(rng) - 3);
    p.dim = 1 + std::floor(500 * u(rng));
    p.local_steps = 1 + static_cast<std::size_t>(50 * u(rng));
    p.leapfrog_steps = 1 + static_cast<std::size_t>(20 * u(rng));
    p.L = 0.1 + 5 * u(rng);
    p.rho = u(rng);
    p.nodes = 1 + static_cast<std::size_t>(10 * u(rng));
    p.sigma_g = 5 * u(rng);
    p.weights.assign(p.nodes, 1.0 / double(p.nodes));
    const double eta = theorem_stepsize(p);
    EXPECT_GT(eta, 0.0);

    auto more = p;
    more.epsilon *= 1.5;
    EXPECT_GE(theorem_stepsize(more), eta);
    more = p;
    more.dim += 10;
    EXPECT_LE(theorem_stepsize(more), eta);
    more = p;
    more.local_steps += 3;
    EXPECT_LE(theorem_stepsize(more), eta);
    more = p;
    more.nodes += 2;
    more.weights.assign(more.nodes, 1.0 / double(p.nodes));
    EXPECT_LE(theorem_stepsize(more), eta);
    more = p;
    more.sigma_g += 1;
    EXPECT_LE(theorem_stepsize(more), eta);
  }
}

TEST(TheoremStepsize, RejectsBadInput) {
  auto p = base_problem();
  p.epsilon = 0;
  EXPECT_THROW(theorem_stepsize(p), ContractViolation);
  p = base_problem();
  p.rho = 1.5;
  EXPECT_THROW(theorem_stepsize(p), ContractViolation);
}

TEST(Schedule, ConstantAndPiecewise) {
  const auto c = StepsizeSchedule<double>::constant(0.3);
  EXPECT_EQ(c(0), 0.3);
  EXPECT_EQ(c(123456), 0.3);
  const auto pw =
      StepsizeSchedule<double>::piecewise({{0, 0.5}, {10, 0.2}, {30, 0.1}});
  EXPECT_EQ(pw(9), 0.5);
  EXPECT_EQ(pw(10), 0.2);
  EXPECT_EQ(pw(29), 0.2);
  EXPECT_EQ(pw(1000), 0.1);
  pw.require_non_increasing();
  const auto up = StepsizeSchedule<double>::piecewise({{0, 0.1}, {5, 0.2}});
  EXPECT_THROW(up.require_non_increasing(), ContractViolation);
  EXPECT_THROW(StepsizeSchedule<double>::constant(0.0), ContractViolation);
  EXPECT_THROW(StepsizeSchedule<double>::piecewise({{1, 0.1}}),
               ContractViolation);
}

TEST(Schedule, EpochDoublingDecayAndLengths) {
  const std::size_t t1 = 20;
  const auto s = StepsizeSchedule<double>::epoch_doubling(0.4, t1);
  std::size_t start = 0, length = t1;
  for (std::size_t epoch = 0; epoch < 8; ++epoch) {
    EXPECT_EQ(s.epoch_start(epoch), start);
    EXPECT_EQ(s.epoch_start(epoch), t1 * ((std::size_t{1} << epoch) - 1));
    const double expect = 0.4 * std::pow(2.0, -double(epoch) / 2);
    EXPECT_NEAR(s(start), expect, 1e-15);
    EXPECT_NEAR(s(start + length - 1), expect, 1e-15);
    EXPECT_EQ(s.epoch_of(start), epoch);
    EXPECT_EQ(s.epoch_of(start + length - 1), epoch);
    start += length;
    length *= 2;
  }
}

TEST(ScheduleProperty, PositiveAndNonIncreasing) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = StepsizeSchedule<double>::epoch_doubling(
        1e-3 + u(rng), 1 + static_cast<std::size_t>(100 * u(rng)));
    s.require_non_increasing();
    double prev = s(0);
    for (std::size_t t = 1; t < 5000; t += 1 + t / 50) {
      const double eta = s(t);
      EXPECT_GT(eta, 0.0);
      EXPECT_LE(eta, prev);
      prev = eta;
    }
  }
}

TEST(DynamicSchedule, FormulaAndMultipleOfT) {
  const double D = 2, dt = 30, L = 1.5, mu = 0.5, cd = default_cd(10.0);
  const std::size_t K = 4, T = 7;
  const auto s = dynamic_schedule(D, dt, L, mu, K, T, cd);
  const double horizon = std::sqrt(D / (8 * cd * dt * L));
  EXPECT_NEAR(s(0) * K, horizon, 1e-15);
  const double raw =
      -std::log(8.0) / (T * std::log(1 - mu * horizon * horizon / 4));
  EXPECT_EQ(s.first_epoch(), static_cast<std::size_t>(std::ceil(raw)) * T);
  EXPECT_EQ(s.first_epoch() % T, 0u);
  EXPECT_NEAR(s.decay(), 1 / std::numbers::sqrt2, 1e-16);
  for (std::size_t epoch = 0; epoch < 6; ++epoch)
    EXPECT_EQ(s.epoch_start(epoch) % T, 0u);
}

TEST(DynamicSchedule, BoundaryValidation) {
  // D = 1 and c_dΔ̃L = 1/8 give (Kη)² = 1: fine for μ < 4, rejected at 4.
  const auto ok = dynamic_schedule(1.0, 1.0 / 8, 1.0, 3.9, 1, 1, 1.0);
  EXPECT_NEAR(ok(0), 1.0, 1e-15);
  EXPECT_THROW(dynamic_schedule(1.0, 1.0 / 8, 1.0, 4.0, 1, 1, 1.0),
               ContractViolation);
  EXPECT_THROW(dynamic_schedule(0.0, 1.0, 1.0, 0.5, 1, 1, 1.0),
               ContractViolation);
}

TEST(DynamicSchedule, DefaultsAndDeltaTilde) {
  EXPECT_NEAR(default_cd(1.0), 128 + 32 * std::log(2.0) * std::log(2.0), 1e-12);
  const std::vector<double> w{0.25, 0.75};
  const double dt = delta_tilde(10.0, 3, 0.5, 0.2, 2, w, 2.0, 4);
  EXPECT_NEAR(dt, 10 * (9 * (0.5 + 0.8 * 2) + (0.0625 + 0.5625) * 4 / 4),
              1e-12);
}

TEST(HeuristicK, Values) {
  EXPECT_EQ(heuristic_K(0.01), 104u);
  EXPECT_EQ(heuristic_K(0.1047), 10u);
  EXPECT_EQ(heuristic_K(std::numbers::pi / 3), 1u);
  EXPECT_EQ(heuristic_K(5.0), 1u);
  EXPECT_THROW(heuristic_K(0.0), ContractViolation);
}

TEST(DynamicSchedule, GammaTerms) {
  auto p = base_problem();
  // d=100, T=10, ρ=0, N=10, ε=0.3, no noise: third term wins.
  EXPECT_DOUBLE_EQ(dynamic_gamma(p), 0.09 / (100.0 * 100.0 * 10.0));
  p.rho = 1;
  EXPECT_DOUBLE_EQ(dynamic_gamma(p), 0.3 / (10.0 * 10.0));
  p.sigma_g = 10;
  // ε²K/(dΣw²σ²) = 0.09·5/(100·0.1·100)
  EXPECT_DOUBLE_EQ(dynamic_gamma(p), 0.09 * 5 / (100 * 0.1 * 100));
  p.epsilon = 1e9;
  p.L = 4;
  EXPECT_DOUBLE_EQ(dynamic_gamma(p), 0.5);
}
