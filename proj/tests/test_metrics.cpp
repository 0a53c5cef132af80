#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fahmc/metrics.hpp"
#include "fahmc/models.hpp"
#include "fahmc/random.hpp"

using namespace fahmc;
using V = Vec<double>;
using SM = SampleMatrix<double>;

namespace {

DiagGaussian<double> gauss(std::initializer_list<double> m,
                           std::initializer_list<double> v) {
  DiagGaussian<double> g{V(static_cast<Eigen::Index>(m.size())),
                         V(static_cast<Eigen::Index>(v.size()))};
  Eigen::Index i = 0;
  for (double x : m) g.mean[i++] = x;
  i = 0;
  for (double x : v) g.var[i++] = x;
  return g;
}

SM column(std::initializer_list<double> xs) {
  SM m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

SM gaussian_samples(Eigen::Index n, Eigen::Index d, Engine& rng,
                    double mean = 0, double sd = 1) {
  std::normal_distribution<double> normal(mean, sd);
  SM m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = normal(rng);
  return m;
}

// Optimal assignment cost over all permutations.
double brute_force_w1(const std::vector<double>& a, std::vector<double> b) {
  std::sort(b.begin(), b.end());
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0;
    for (std::size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[i]);
    best = std::min(best, cost);
  } while (std::next_permutation(b.begin(), b.end()));
  return best / double(a.size());
}

}  // namespace

TEST(W2Gaussian, ClosedFormCases) {
  const auto a = gauss({0}, {1});
  EXPECT_EQ(w2_gaussian(a, a), 0.0);
  EXPECT_DOUBLE_EQ(w2_gaussian(a, gauss({1}, {1})), 1.0);
  EXPECT_DOUBLE_EQ(w2_gaussian(a, gauss({0}, {4})), 1.0);
  EXPECT_THROW(w2_gaussian(a, gauss({0}, {-1})), ContractViolation);
  EXPECT_THROW(w2_gaussian(a, gauss({0, 0}, {1, 1})), ContractViolation);
}

TEST(W2Gaussian, MatchesSortedEmpiricalCoupling) {
  // In 1-d the optimal coupling is the quantile coupling, so W2 between
  // large sorted samples of N(0,1) and N(0,4) approaches 1.
  Engine rng(1);
  const int n = 1000000;
  std::normal_distribution<double> z(0, 1);
  std::vector<double> a(n), b(n);
  for (auto& x : a) x = z(rng);
  for (auto& x : b) x = 2 * z(rng);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double sq = 0;
  for (int i = 0; i < n; ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(std::sqrt(sq / n), 1.0, 0.01);
}

TEST(W2GaussianProperty, MetricAxioms) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3), v(0, 4);
  auto random_gauss = [&] {
    DiagGaussian<double> g{V(3), V(3)};
    for (int i = 0; i < 3; ++i) {
      g.mean[i] = u(rng);
      g.var[i] = v(rng);
    }
    return g;
  };
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_gauss(), b = random_gauss(), c = random_gauss();
    EXPECT_DOUBLE_EQ(w2_gaussian(a, b), w2_gaussian(b, a));
    EXPECT_EQ(w2_gaussian(a, a), 0.0);
    EXPECT_GT(w2_gaussian(a, b), 0.0);
    EXPECT_LE(w2_gaussian(a, c), w2_gaussian(a, b) + w2_gaussian(b, c) + 1e-12);
  }
}

TEST(ProductPosterior, SingleAndSymmetric) {
  const auto one = gaussian_product_posterior<double>(
      {{V::Constant(2, 3.0), 2.0, 1.0}});
  EXPECT_EQ(one.mean, V::Constant(2, 3.0));
  EXPECT_EQ(one.var, V::Constant(2, 0.5));
  const auto two = gaussian_product_posterior<double>(
      {{V::Zero(1), 1.0, 0.5}, {V::Constant(1, 2.0), 1.0, 0.5}});
  EXPECT_DOUBLE_EQ(two.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(two.var[0], 1.0);
}

TEST(ProductPosterior, HeterogeneousFleetMoments) {
  // Halves N(20·1, I) and N(1·1, 2I): precisions 1 and 1/2.
  const auto p = gaussian_product_posterior<double>(
      {{V::Constant(3, 20.0), 1.0, 0.5}, {V::Constant(3, 1.0), 0.5, 0.5}});
  const double Lambda = 0.5 * 1.0 + 0.5 * 0.5;
  const double mean = (0.5 * 20.0 + 0.25 * 1.0) / Lambda;
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(p.mean[i], mean, 1e-12);
    EXPECT_NEAR(p.var[i], 1 / Lambda, 1e-12);
  }
}

TEST(ProductPosteriorProperty, MeanIsStationaryPoint) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-5, 5), lam(0.1, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GaussianFactor<double>> f;
    std::vector<double> w{0.2, 0.3, 0.5};
    for (double wc : w) {
      V m(4);
      for (int i = 0; i < 4; ++i) m[i] = u(rng);
      f.push_back({m, lam(rng), wc});
    }
    const auto post = gaussian_product_posterior(f);
    V g = V::Zero(4);
    for (const auto& fc : f) {
      TargetModel<double> node = QuadraticNode<double>(fc.mean, fc.precision);
      g += fc.weight * grad(node, post.mean);
    }
    EXPECT_LT(g.lpNorm<Eigen::Infinity>(), 1e-12);
  }
}

TEST(ProductPosterior, RejectsUnnormalizedWeights) {
  EXPECT_THROW(gaussian_product_posterior<double>(
                   {{V::Zero(1), 1.0, 0.4}, {V::Zero(1), 1.0, 0.4}}),
               ContractViolation);
}

TEST(MarginalError, SmallCases) {
  const auto a = column({0, 1});
  EXPECT_EQ(marginal_error(a, a), 0.0);
  EXPECT_DOUBLE_EQ(marginal_error(a, column({1, 2})), 1.0);
  EXPECT_THROW(marginal_error(a, column({1, 2, 3})), ContractViolation);
}

TEST(MarginalError, SortedCouplingEqualsBruteForce) {
  // Every multiset pair of size n ≤ 5 over {0,…,3}.
  for (std::size_t n = 1; n <= 5; ++n) {
    std::vector<int> ia(n, 0);
    auto next = [](std::vector<int>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] < 3) {
          ++v[i];
          for (std::size_t j = 0; j < i; ++j) v[j] = v[i];
          return true;
        }
      }
      return false;
    };
    do {
      std::vector<int> ib(n, 0);
      do {
        std::vector<double> a(ia.begin(), ia.end()), b(ib.begin(), ib.end());
        EXPECT_DOUBLE_EQ(w1_sorted(a, b), brute_force_w1(a, b));
      } while (next(ib));
    } while (next(ia));
  }
}

TEST(MarginalErrorProperty, SymmetryPermutationAndTranslation) {
  Engine rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    SM a = gaussian_samples(50, 3, rng), b = gaussian_samples(50, 3, rng, 1);
    const double me = marginal_error(a, b);
    EXPECT_DOUBLE_EQ(me, marginal_error(b, a));

    std::vector<int> perm(50);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    SM pa(50, 3), pb(50, 3);
    for (int i = 0; i < 50; ++i) {
      pa.row(i) = a.row(perm[i]);
      pb.row(i) = b.row(perm[i]);
    }
    EXPECT_NEAR(marginal_error(pa, pb), me, 1e-12);

    const Eigen::RowVector3d shift(0.5, -2.0, 7.0);
    EXPECT_NEAR(marginal_error(SM(a.rowwise() + shift), SM(b.rowwise() + shift)),
                me, 1e-12);
  }
}

TEST(MarginalError, SeparatedShiftIsExact) {
  Engine rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  SM a(30, 1);
  for (int i = 0; i < 30; ++i) a(i, 0) = u(rng);
  for (double delta : {1.5, 3.0, 10.0}) {
    const SM b = a.array() + delta;
    EXPECT_NEAR(marginal_error(a, b), delta, 1e-12);
  }
}

TEST(MarginalError, DecaysWithSampleSize) {
  Engine rng(12);
  std::vector<double> logn, logme;
  for (Eigen::Index n : {100, 1000, 10000}) {
    double me = 0;
    const int reps = 20;
    for (int r = 0; r < reps; ++r)
      me += marginal_error(gaussian_samples(n, 2, rng),
                           gaussian_samples(n, 2, rng));
    logn.push_back(std::log(double(n)));
    logme.push_back(std::log(me / reps));
  }
  const auto fit = fit_line(logn, logme);
  EXPECT_GE(fit.slope, -0.65);
  EXPECT_LE(fit.slope, -0.35);
}

TEST(StridedSubsample, PicksEvenlySpacedRows) {
  SM m(10, 1);
  for (int i = 0; i < 10; ++i) m(i, 0) = i;
  const SM s = strided_subsample(m, 4);
  ASSERT_EQ(s.rows(), 4);
  EXPECT_EQ(s(0, 0), 0);
  EXPECT_EQ(s(1, 0), 2);
  EXPECT_EQ(s(2, 0), 5);
  EXPECT_EQ(s(3, 0), 7);
  EXPECT_THROW(strided_subsample(m, 11), ContractViolation);
}

TEST(EmpiricalMoments, Basics) {
  const auto c = empirical_moments(SM(SM::Constant(5, 2, 3.0)));
  EXPECT_EQ(c.var, V::Zero(2));
  const auto pm = empirical_moments(column({-1, 1}));
  EXPECT_EQ(pm.mean[0], 0.0);
  EXPECT_EQ(pm.var[0], 2.0);
  EXPECT_THROW(empirical_moments(column({1})), ContractViolation);
}

TEST(EmpiricalMoments, CentralLimitBand) {
  Engine rng(31);
  const auto m = empirical_moments(gaussian_samples(1000000, 1, rng, 3.0,
                                                    std::sqrt(5.0)));
  EXPECT_LT(std::abs(m.mean[0] - 3.0), 3 * std::sqrt(5.0 / 1e6));
}

TEST(EmpiricalMoments, IsotropicPoolsCoordinates) {
  SM m(2, 2);
  m << 0, 2, 2, 4;
  const auto iso = empirical_moments_isotropic(m);
  EXPECT_EQ(iso.mean, V::Constant(2, 2.0));
  EXPECT_DOUBLE_EQ(iso.var[0], 8.0 / 3.0);
}

TEST(SplitRHat, DegenerateIsInfinite) {
  const SM c = SM::Constant(10, 2, 1.0);
  const V r = split_r_hat<double>({c, c});
  EXPECT_TRUE(std::isinf(r[0]) && std::isinf(r[1]));
}

TEST(SplitRHat, StationaryChainsNearOne) {
  Engine rng(2);
  const V r = split_r_hat<double>(
      {gaussian_samples(100000, 2, rng), gaussian_samples(100000, 2, rng)});
  for (int j = 0; j < 2; ++j) {
    EXPECT_GE(r[j], 0.99);
    EXPECT_LE(r[j], 1.01);
  }
}

TEST(SplitRHat, SeparatedChainsMatchFormula) {
  Engine rng(3);
  const SM a = gaussian_samples(10000, 1, rng);
  const SM b = gaussian_samples(10000, 1, rng, 10.0);
  const double r = split_r_hat<double>({a, b})[0];
  EXPECT_GT(r, 3.0);
  // Direct evaluation from the four half-chains.
  const int n = 5000;
  std::vector<Eigen::VectorXd> halves{a.col(0).head(n), a.col(0).tail(n),
                                      b.col(0).head(n), b.col(0).tail(n)};
  double W = 0, grand = 0;
  std::vector<double> means;
  for (const auto& h : halves) {
    const double mu = h.mean();
    means.push_back(mu);
    grand += mu / 4;
    W += (h.array() - mu).square().sum() / (n - 1) / 4;
  }
  double B = 0;
  for (double mu : means) B += n * (mu - grand) * (mu - grand) / 3;
  EXPECT_NEAR(r, std::sqrt(((n - 1.0) / n * W + B / n) / W), 1e-10);
}

TEST(PredictiveMetrics, PerfectAndUninformative) {
  const V y = (V(4) << 1, 0, 1, 0).finished();
  const auto perfect = predictive_metrics<double>(y, y);
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.brier, 0.0);
  EXPECT_EQ(perfect.ece, 0.0);
  EXPECT_LT(perfect.nll, 1e-11);
  const auto half = predictive_metrics<double>(V::Constant(4, 0.5), y);
  EXPECT_DOUBLE_EQ(half.brier, 0.25);
  EXPECT_NEAR(half.nll, std::log(2.0), 1e-15);
  EXPECT_THROW(predictive_metrics<double>(V(0), V(0)), ContractViolation);
}

TEST(PredictiveMetrics, MatchesDirectReference) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  const int n = 2000;
  V p(n), y(n);
  for (int i = 0; i < n; ++i) {
    p[i] = u(rng);
    y[i] = u(rng) < p[i] ? 1 : 0;
  }
  const auto got = predictive_metrics<double>(p, y);
  // Reference: loop bins outside, samples inside.
  double ece = 0;
  for (int b = 0; b < 10; ++b) {
    double cnt = 0, conf = 0, acc = 0;
    for (int i = 0; i < n; ++i) {
      const double c = std::max(p[i], 1 - p[i]);
      const int bin = std::min(9, int(c * 10));
      if (bin != b) continue;
      cnt += 1;
      conf += c;
      acc += ((p[i] > 0.5 ? 1.0 : 0.0) == y[i]) ? 1 : 0;
    }
    if (cnt > 0) ece += cnt / n * std::abs(acc / cnt - conf / cnt);
  }
  double acc = 0, nll = 0, brier = 0;
  for (int i = 0; i < n; ++i) {
    acc += ((p[i] > 0.5) == (y[i] == 1)) ? 1 : 0;
    const double pc = std::clamp(p[i], 1e-12, 1 - 1e-12);
    nll += -(y[i] * std::log(pc) + (1 - y[i]) * std::log(1 - pc));
    brier += (p[i] - y[i]) * (p[i] - y[i]);
  }
  EXPECT_DOUBLE_EQ(got.accuracy, acc / n);
  EXPECT_NEAR(got.nll, nll / n, 1e-14);
  EXPECT_NEAR(got.brier, brier / n, 1e-14);
  EXPECT_NEAR(got.ece, ece, 1e-14);
}

TEST(FitLine, ExactLine) {
  const auto f = fit_line<double>({1, 2, 3, 4}, {3, 5, 7, 9});
  EXPECT_NEAR(f.slope, 2, 1e-14);
  EXPECT_NEAR(f.intercept, 1, 1e-14);
  EXPECT_NEAR(f.r2, 1, 1e-14);
}
