#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <random>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fahmc/random.hpp"
#include "fahmc/types.hpp"

namespace fahmc {

/// Strong-convexity and gradient-Lipschitz constants of a potential.
template <typename S>
struct Smoothness {
  S mu;
  S L;
};

/**
 * Isotropic quadratic potential f(θ) = (λ/2)‖θ − m‖².
 *
 * The Gaussian N(m, I/λ) in potential form. Both smoothness constants
 * equal λ.
 */
template <typename S>
class QuadraticNode {
 public:
  QuadraticNode(Vec<S> mean, S precision)
      : mean_(std::move(mean)), precision_(precision) {
    detail::require(precision_ > S(0) && std::isfinite(precision_),
                    "QuadraticNode: precision must be positive and finite");
    detail::require(mean_.size() > 0, "QuadraticNode: empty mean");
  }

  const Vec<S>& mean() const noexcept { return mean_; }
  S precision() const noexcept { return precision_; }
  Eigen::Index dim() const noexcept { return mean_.size(); }

  S value(const Vec<S>& theta) const {
    return S(0.5) * precision_ * (theta - mean_).squaredNorm();
  }

  Vec<S> grad(const Vec<S>& theta) const {
    return precision_ * (theta - mean_);
  }

  Smoothness<S> smoothness() const noexcept { return {precision_, precision_}; }

 private:
  Vec<S> mean_;
  S precision_;
};

/**
 * Bayesian logistic regression shard:
 * f(θ) = scale·Σ_i log(1 + exp(−y_i x_iᵀθ)) + (prior/2)‖θ‖², y_i ∈ {−1,+1}.
 *
 * `scale` carries the n/n_c factor that makes Σ_c w_c f^(c) the full-data
 * potential when w_c = n_c/n.
 */
template <typename S>
class LogisticNode {
 public:
  LogisticNode(Mat<S> features, Vec<S> labels, S prior_precision, S scale)
      : features_(std::move(features)),
        labels_(std::move(labels)),
        prior_(prior_precision),
        scale_(scale) {
    detail::require(features_.rows() > 0 && features_.cols() > 0,
                    "LogisticNode: empty design matrix");
    detail::require(labels_.size() == features_.rows(),
                    "LogisticNode: one label per row required");
    detail::require(prior_ >= S(0), "LogisticNode: prior precision < 0");
    detail::require(scale_ > S(0), "LogisticNode: scale must be positive");
    for (Eigen::Index i = 0; i < labels_.size(); ++i) {
      if (labels_[i] == S(0)) labels_[i] = S(-1);
      detail::require(labels_[i] == S(1) || labels_[i] == S(-1),
                      "LogisticNode: labels must be in {0,1} or {-1,+1}");
    }
    const Mat<S> gram = features_.transpose() * features_;
    Eigen::SelfAdjointEigenSolver<Mat<S>> eig(gram, Eigen::EigenvaluesOnly);
    gram_norm_ = eig.eigenvalues().maxCoeff();
  }

  const Mat<S>& features() const noexcept { return features_; }
  const Vec<S>& labels() const noexcept { return labels_; }
  S prior_precision() const noexcept { return prior_; }
  S scale() const noexcept { return scale_; }
  Eigen::Index dim() const noexcept { return features_.cols(); }
  Eigen::Index rows() const noexcept { return features_.rows(); }

  S value(const Vec<S>& theta) const {
    const Vec<S> margin = labels_.cwiseProduct(features_ * theta);
    S loss = 0;
    for (Eigen::Index i = 0; i < margin.size(); ++i) {
      const S z = -margin[i];
      loss += std::max(z, S(0)) + std::log1p(std::exp(-std::abs(z)));
    }
    return scale_ * loss + S(0.5) * prior_ * theta.squaredNorm();
  }

  Vec<S> grad(const Vec<S>& theta) const {
    const Vec<S> margin = labels_.cwiseProduct(features_ * theta);
    const Vec<S> weight =
        labels_.cwiseProduct(margin.unaryExpr(&sigmoid_neg));
    return -scale_ * (features_.transpose() * weight) + prior_ * theta;
  }

  /// Gradient using only the given rows, rescaled by n_c / |rows|.
  Vec<S> subset_grad(const Vec<S>& theta,
                     const std::vector<Eigen::Index>& rows) const {
    Vec<S> acc = Vec<S>::Zero(dim());
    for (Eigen::Index r : rows) {
      const S y = labels_[r];
      const S m = y * features_.row(r).dot(theta);
      acc.noalias() += (y * sigmoid_neg(m)) * features_.row(r).transpose();
    }
    const S rescale = S(this->rows()) / S(rows.size());
    return -scale_ * rescale * acc + prior_ * theta;
  }

  /// μ from the prior alone; L from the ¼ bound on the sigmoid
  /// derivative and the largest eigenvalue of XᵀX.
  Smoothness<S> smoothness() const noexcept {
    return {prior_, scale_ * S(0.25) * gram_norm_ + prior_};
  }

 private:
  // 1 / (1 + e^m), stable in both tails.
  static S sigmoid_neg(S m) {
    if (m >= S(0)) {
      const S e = std::exp(-m);
      return e / (S(1) + e);
    }
    return S(1) / (S(1) + std::exp(m));
  }

  Mat<S> features_;
  Vec<S> labels_;
  S prior_;
  S scale_;
  S gram_norm_ = 0;
};

template <typename S>
using TargetModel = std::variant<QuadraticNode<S>, LogisticNode<S>>;

template <typename S>
Eigen::Index dimension(const TargetModel<S>& model) {
  return std::visit([](const auto& m) { return m.dim(); }, model);
}

template <typename S>
Smoothness<S> smoothness(const TargetModel<S>& model) {
  return std::visit([](const auto& m) { return m.smoothness(); }, model);
}

template <typename S>
S potential(const TargetModel<S>& model, const VecArg<S>& theta) {
  detail::require(theta.size() == dimension(model),
                  "potential: dimension mismatch");
  return std::visit([&](const auto& m) { return m.value(theta); }, model);
}

/// Exact gradient of the node potential.
template <typename S>
Vec<S> grad(const TargetModel<S>& model, const VecArg<S>& theta) {
  detail::require(theta.size() == dimension(model),
                  "grad: dimension mismatch");
  return std::visit([&](const auto& m) { return m.grad(theta); }, model);
}

enum class NoiseKind { exact, additive_gaussian, minibatch };

/// How gradient evaluations are perturbed.
template <typename S>
struct GradientNoise {
  NoiseKind kind = NoiseKind::exact;
  S variance = 0;              // per coordinate, additive_gaussian only
  std::size_t batch_size = 0;  // minibatch only

  static GradientNoise exact() { return {}; }
  static GradientNoise additive_gaussian(S variance) {
    detail::require(variance >= S(0), "noise variance must be >= 0");
    return {NoiseKind::additive_gaussian, variance, 0};
  }
  static GradientNoise minibatch(std::size_t batch_size) {
    detail::require(batch_size > 0, "minibatch size must be positive");
    return {NoiseKind::minibatch, 0, batch_size};
  }

  bool is_exact() const noexcept { return kind == NoiseKind::exact; }

  friend bool operator==(const GradientNoise&, const GradientNoise&) = default;
};

/**
 * Unbiased gradient estimate drawn with `rng`.
 *
 * Exact returns grad() unchanged. Additive Gaussian adds i.i.d.
 * N(0, σ²) per coordinate. Minibatch draws rows without replacement and
 * rescales; a batch covering every row is the exact gradient.
 */
template <typename S, typename Rng>
Vec<S> stochastic_grad(const TargetModel<S>& model, const VecArg<S>& theta,
                       const GradientNoise<S>& noise, Rng& rng) {
  switch (noise.kind) {
    case NoiseKind::exact:
      return grad(model, theta);
    case NoiseKind::additive_gaussian: {
      Vec<S> g = grad(model, theta);
      const S sd = std::sqrt(noise.variance);
      boost::random::normal_distribution<S> normal(S(0), S(1));
      for (Eigen::Index i = 0; i < g.size(); ++i) g[i] += sd * normal(rng);
      return g;
    }
    case NoiseKind::minibatch: {
      const auto* node = std::get_if<LogisticNode<S>>(&model);
      if (node == nullptr)
        throw UnsupportedCombination(
            "minibatch gradients need a data-backed model");
      detail::require(theta.size() == node->dim(),
                      "stochastic_grad: dimension mismatch");
      const auto n = static_cast<std::size_t>(node->rows());
      if (noise.batch_size >= n) return node->grad(theta);
      std::vector<Eigen::Index> all(n);
      std::iota(all.begin(), all.end(), Eigen::Index{0});
      std::vector<Eigen::Index> batch;
      batch.reserve(noise.batch_size);
      std::sample(all.begin(), all.end(), std::back_inserter(batch),
                  noise.batch_size, rng);
      return node->subset_grad(theta, batch);
    }
  }
  throw ContractViolation("stochastic_grad: unknown noise kind");
}

/// Empirical smoothness constants from probe pairs, compared with the
/// model's declared (μ, L).
template <typename S>
struct AssumptionReport {
  S mu_est = std::numeric_limits<S>::infinity();
  S L_est = 0;
  std::size_t violations = 0;
  std::size_t pairs_used = 0;
};

template <typename S>
AssumptionReport<S> check_assumptions_on(
    const TargetModel<S>& model,
    const std::vector<std::pair<Vec<S>, Vec<S>>>& pairs,
    S rel_tol = S(1e-9)) {
  const Smoothness<S> declared = smoothness(model);
  AssumptionReport<S> report;
  for (const auto& [x, y] : pairs) {
    const Vec<S> dx = x - y;
    const S dist2 = dx.squaredNorm();
    if (!(dist2 > S(0))) continue;
    const Vec<S> dg = grad(model, x) - grad(model, y);
    const S monotone = dg.dot(dx) / dist2;
    const S lipschitz = dg.norm() / std::sqrt(dist2);
    report.mu_est = std::min(report.mu_est, monotone);
    report.L_est = std::max(report.L_est, lipschitz);
    ++report.pairs_used;
    if (monotone < declared.mu * (S(1) - rel_tol) ||
        lipschitz > declared.L * (S(1) + rel_tol))
      ++report.violations;
  }
  return report;
}

/**
 * Probe `probe_count` random pairs around the model's natural centre
 * (the mean for quadratics, the origin otherwise) at the given spread.
 */
template <typename S, typename Rng>
AssumptionReport<S> check_assumptions(const TargetModel<S>& model,
                                      std::size_t probe_count, Rng& rng,
                                      S spread = S(1)) {
  detail::require(probe_count >= 2, "check_assumptions: probe_count < 2");
  const Eigen::Index d = dimension(model);
  Vec<S> center = Vec<S>::Zero(d);
  if (const auto* q = std::get_if<QuadraticNode<S>>(&model)) center = q->mean();
  std::vector<std::pair<Vec<S>, Vec<S>>> pairs;
  pairs.reserve(probe_count);
  for (std::size_t i = 0; i < probe_count; ++i) {
    Vec<S> x = center + spread * standard_normal<S>(d, rng);
    Vec<S> y = center + spread * standard_normal<S>(d, rng);
    pairs.emplace_back(std::move(x), std::move(y));
  }
  return check_assumptions_on(model, pairs);
}

/// Simulated logistic-regression data; labels are 0/1.
template <typename S>
struct LogisticData {
  Mat<S> features;
  Vec<S> labels;
  Vec<S> true_theta;
};

/**
 * Features x_ij ~ N(0, feature_scale²), coefficients θ ~ N(0, I),
 * labels y_i ~ Bernoulli(sigmoid(x_iᵀθ)).
 */
template <typename S, typename Rng>
LogisticData<S> synthetic_logistic_data(Eigen::Index samples,
                                        Eigen::Index dim, S feature_scale,
                                        Rng& rng) {
  detail::require(samples > 0 && dim > 0,
                  "synthetic_logistic_data: empty shape");
  LogisticData<S> data;
  data.true_theta = standard_normal<S>(dim, rng);
  data.features.resize(samples, dim);
  boost::random::normal_distribution<S> normal(S(0), feature_scale);
  for (Eigen::Index i = 0; i < samples; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) data.features(i, j) = normal(rng);
  data.labels.resize(samples);
  std::uniform_real_distribution<S> unif(S(0), S(1));
  for (Eigen::Index i = 0; i < samples; ++i) {
    const S logit = data.features.row(i).dot(data.true_theta);
    const S prob = S(1) / (S(1) + std::exp(-logit));
    data.labels[i] = unif(rng) < prob ? S(1) : S(0);
  }
  return data;
}

/// A fleet of node models with its aggregation weights.
template <typename S>
struct Fleet {
  std::vector<TargetModel<S>> models;
  std::vector<S> weights;
};

/**
 * Split rows into `nodes` contiguous shards of near-equal size. Node c
 * gets scale n/n_c and the full prior, with weight n_c/n, so the
 * weighted sum of node potentials is the full posterior potential.
 */
template <typename S>
Fleet<S> split_logistic_fleet(const LogisticData<S>& data, std::size_t nodes,
                              S prior_precision) {
  const auto n = static_cast<std::size_t>(data.features.rows());
  detail::require(nodes >= 1 && nodes <= n,
                  "split_logistic_fleet: need 1 <= nodes <= rows");
  Fleet<S> fleet;
  std::size_t start = 0;
  for (std::size_t c = 0; c < nodes; ++c) {
    const std::size_t count = n / nodes + (c < n % nodes ? 1 : 0);
    const auto first = static_cast<Eigen::Index>(start);
    const auto len = static_cast<Eigen::Index>(count);
    fleet.models.emplace_back(LogisticNode<S>(
        data.features.middleRows(first, len), data.labels.segment(first, len),
        prior_precision, S(n) / S(count)));
    fleet.weights.push_back(S(count) / S(n));
    start += count;
  }
  return fleet;
}

}  // namespace fahmc
