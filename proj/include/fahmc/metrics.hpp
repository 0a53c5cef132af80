#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "fahmc/types.hpp"

namespace fahmc {

/// Gaussian with diagonal covariance.
template <typename S>
struct DiagGaussian {
  Vec<S> mean;
  Vec<S> var;

  Eigen::Index dim() const noexcept { return mean.size(); }
};

/// W2 between diagonal Gaussians: √(‖μ_a − μ_b‖² + Σ_i (√v_a,i − √v_b,i)²).
template <typename S>
S w2_gaussian(const DiagGaussian<S>& a, const DiagGaussian<S>& b) {
  detail::require(a.dim() == b.dim() && a.var.size() == a.dim() &&
                      b.var.size() == b.dim(),
                  "w2_gaussian: dimension mismatch");
  detail::require((a.var.array() >= S(0)).all() && (b.var.array() >= S(0)).all(),
                  "w2_gaussian: negative variance");
  const S mean_part = (a.mean - b.mean).squaredNorm();
  const S cov_part =
      (a.var.array().sqrt() - b.var.array().sqrt()).matrix().squaredNorm();
  return std::sqrt(mean_part + cov_part);
}

/// One isotropic Gaussian factor N(mean, I/precision) with its weight.
template <typename S>
struct GaussianFactor {
  Vec<S> mean;
  S precision;
  S weight;
};

/**
 * Target of a quadratic fleet: π ∝ exp(−Σ_c w_c (λ_c/2)‖θ − m_c‖²).
 * Precision Λ = Σ w_c λ_c, mean Σ w_c λ_c m_c / Λ.
 */
template <typename S>
DiagGaussian<S> gaussian_product_posterior(
    const std::vector<GaussianFactor<S>>& factors) {
  detail::require(!factors.empty(), "gaussian_product_posterior: no factors");
  const Eigen::Index d = factors.front().mean.size();
  S weight_sum = 0;
  S precision = 0;
  Vec<S> weighted_mean = Vec<S>::Zero(d);
  for (const auto& f : factors) {
    detail::require(f.mean.size() == d,
                    "gaussian_product_posterior: dimension mismatch");
    detail::require(f.precision > S(0) && f.weight > S(0),
                    "gaussian_product_posterior: precision and weight must be > 0");
    weight_sum += f.weight;
    precision += f.weight * f.precision;
    weighted_mean += (f.weight * f.precision) * f.mean;
  }
  detail::require(std::abs(weight_sum - S(1)) <= S(1e-12) * S(factors.size()),
                  "gaussian_product_posterior: weights must sum to 1");
  return {weighted_mean / precision, Vec<S>::Constant(d, S(1) / precision)};
}

/// W1 between two equal-size 1-d empirical measures via the sorted
/// (quantile) coupling.
template <typename S>
S w1_sorted(std::vector<S> a, std::vector<S> b) {
  detail::require(a.size() == b.size() && !a.empty(),
                  "w1_sorted: equal, non-zero sample counts required");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  S total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / S(a.size());
}

/**
 * Marginal error: (1/d) Σ_i W1 between the i-th columns of two sample
 * sets. Both sets must have the same number of rows; use
 * `strided_subsample` to equalize first.
 */
template <typename S>
S marginal_error(const SampleMatrix<S>& a, const SampleMatrix<S>& b) {
  detail::require(a.cols() == b.cols() && a.cols() > 0,
                  "marginal_error: dimension mismatch");
  detail::require(a.rows() == b.rows() && a.rows() > 0,
                  "marginal_error: unequal sample counts; subsample the larger "
                  "set (strided_subsample) first");
  S total = 0;
  std::vector<S> ca(static_cast<std::size_t>(a.rows()));
  std::vector<S> cb(ca.size());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      ca[static_cast<std::size_t>(i)] = a(i, j);
      cb[static_cast<std::size_t>(i)] = b(i, j);
    }
    total += w1_sorted(ca, cb);
  }
  return total / S(a.cols());
}

/// Deterministic subsample: rows ⌊i·n_in/n⌋ for i = 0..n−1.
template <typename S>
SampleMatrix<S> strided_subsample(const SampleMatrix<S>& m, Eigen::Index n) {
  detail::require(n >= 1 && n <= m.rows(),
                  "strided_subsample: need 1 <= n <= rows");
  SampleMatrix<S> out(n, m.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = m.row(i * m.rows() / n);
  return out;
}

/// Per-coordinate sample mean and unbiased variance.
template <typename S>
DiagGaussian<S> empirical_moments(const SampleMatrix<S>& samples) {
  detail::require(samples.rows() >= 2, "empirical_moments: need >= 2 samples");
  const S n = S(samples.rows());
  Vec<S> mean = samples.colwise().mean().transpose();
  Vec<S> var = (samples.rowwise() - mean.transpose())
                   .colwise()
                   .squaredNorm()
                   .transpose() /
               (n - S(1));
  return {std::move(mean), std::move(var)};
}

/**
 * Moments for an isotropic target: every coordinate shares one mean and
 * one variance, estimated by pooling all coordinates, then broadcast.
 */
template <typename S>
DiagGaussian<S> empirical_moments_isotropic(const SampleMatrix<S>& samples) {
  detail::require(samples.rows() >= 2,
                  "empirical_moments_isotropic: need >= 2 samples");
  const S count = S(samples.size());
  const S mean = samples.sum() / count;
  const S var = (samples.array() - mean).square().sum() / (count - S(1));
  return {Vec<S>::Constant(samples.cols(), mean),
          Vec<S>::Constant(samples.cols(), var)};
}

/**
 * Split-R̂ per coordinate. Each chain is halved (a middle draw is dropped
 * for odd lengths) and
 *   R̂ = √(((n−1)/n·W + B/n) / W)
 * with n the half length, W the mean within-sequence variance and B the
 * between-sequence variance. W = 0 yields +∞.
 */
template <typename S>
Vec<S> split_r_hat(const std::vector<SampleMatrix<S>>& chains) {
  detail::require(!chains.empty(), "split_r_hat: no chains");
  const Eigen::Index len = chains.front().rows();
  const Eigen::Index d = chains.front().cols();
  detail::require(len >= 4, "split_r_hat: chains need length >= 4");
  for (const auto& c : chains)
    detail::require(c.rows() == len && c.cols() == d,
                    "split_r_hat: chains must share shape");
  const Eigen::Index n = len / 2;
  std::vector<SampleMatrix<S>> halves;
  for (const auto& c : chains) {
    halves.push_back(c.topRows(n));
    halves.push_back(c.bottomRows(n));
  }
  const S m = S(halves.size());
  Vec<S> out(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Vec<S> means(halves.size());
    S within = 0;
    for (std::size_t h = 0; h < halves.size(); ++h) {
      const auto col = halves[h].col(j);
      const S mu = col.mean();
      means[static_cast<Eigen::Index>(h)] = mu;
      within += (col.array() - mu).square().sum() / S(n - 1);
    }
    within /= m;
    const S grand = means.mean();
    const S between =
        S(n) * (means.array() - grand).square().sum() / (m - S(1));
    if (!(within > S(0))) {
      out[j] = std::numeric_limits<S>::infinity();
      continue;
    }
    const S pooled = S(n - 1) / S(n) * within + between / S(n);
    out[j] = std::sqrt(pooled / within);
  }
  return out;
}

template <typename S>
struct PredictiveMetrics {
  S accuracy;
  S nll;
  S brier;
  S ece;
};

/**
 * Accuracy, clamped NLL, Brier score and 10-bin ECE for binary
 * predictions. ECE bins the top-label confidence max(p, 1−p).
 */
template <typename S>
PredictiveMetrics<S> predictive_metrics(const Vec<S>& probabilities,
                                        const Vec<S>& labels) {
  detail::require(probabilities.size() == labels.size(),
                  "predictive_metrics: length mismatch");
  detail::require(probabilities.size() > 0, "predictive_metrics: empty input");
  constexpr int bins = 10;
  constexpr S clamp = S(1e-12);
  std::vector<S> bin_conf(bins, S(0));
  std::vector<S> bin_correct(bins, S(0));
  std::vector<S> bin_count(bins, S(0));
  S correct = 0, nll = 0, brier = 0;
  const auto n = probabilities.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const S p = probabilities[i];
    const S y = labels[i];
    detail::require(p >= S(0) && p <= S(1),
                    "predictive_metrics: probability outside [0, 1]");
    detail::require(y == S(0) || y == S(1),
                    "predictive_metrics: labels must be 0 or 1");
    const S predicted = p > S(0.5) ? S(1) : S(0);
    const S hit = predicted == y ? S(1) : S(0);
    correct += hit;
    const S pc = std::clamp(p, clamp, S(1) - clamp);
    nll -= y * std::log(pc) + (S(1) - y) * std::log(S(1) - pc);
    brier += (p - y) * (p - y);
    const S conf = std::max(p, S(1) - p);
    const int b = std::min(bins - 1, static_cast<int>(conf * S(bins)));
    bin_conf[b] += conf;
    bin_correct[b] += hit;
    bin_count[b] += S(1);
  }
  S ece = 0;
  for (int b = 0; b < bins; ++b) {
    if (bin_count[b] == S(0)) continue;
    ece += bin_count[b] / S(n) *
           std::abs(bin_correct[b] / bin_count[b] - bin_conf[b] / bin_count[b]);
  }
  return {correct / S(n), nll / S(n), brier / S(n), ece};
}

/// Least-squares line y ≈ slope·x + intercept with its R².
template <typename S>
struct LinearFit {
  S slope;
  S intercept;
  S r2;
};

template <typename S>
LinearFit<S> fit_line(const std::vector<S>& x, const std::vector<S>& y) {
  detail::require(x.size() == y.size() && x.size() >= 2,
                  "fit_line: need >= 2 paired points");
  const S n = S(x.size());
  S mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  S sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  detail::require(sxx > S(0), "fit_line: x values are all equal");
  const S slope = sxy / sxx;
  const S intercept = my - slope * mx;
  const S r2 = syy > S(0) ? sxy * sxy / (sxx * syy) : S(1);
  return {slope, intercept, r2};
}

}  // namespace fahmc
