#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "fahmc/integrator.hpp"
#include "fahmc/models.hpp"
#include "fahmc/random.hpp"
#include "fahmc/schedules.hpp"
#include "fahmc/trace.hpp"
#include "fahmc/types.hpp"

namespace fahmc {

/// Where the de-bias correction is anchored at a sync: the previous
/// broadcast (one period stale) or the one being sent now.
enum class DebiasAnchor { lagged, current };

template <typename S>
struct FederationConfig {
  std::vector<S> weights;           // w_c, one per node
  std::size_t local_steps = 1;      // T, iterations between broadcasts
  std::size_t leapfrog_steps = 1;   // K
  S rho = S(1);                     // shared fraction of momentum variance
  StepsizeSchedule<S> schedule = StepsizeSchedule<S>::constant(S(0.1));
  GradientNoise<S> noise = GradientNoise<S>::exact();
  std::uint64_t master_seed = 0;
  DebiasAnchor debias_anchor = DebiasAnchor::lagged;

  std::size_t nodes() const noexcept { return weights.size(); }

  void validate() const {
    detail::require(!weights.empty(), "federation: at least one node required");
    S total = 0;
    for (S w : weights) {
      detail::require(w > S(0), "federation: weights must be positive");
      total += w;
    }
    detail::require(std::abs(total - S(1)) <= S(1e-12),
                    "federation: weights must sum to 1");
    detail::require(local_steps >= 1, "federation: T must be >= 1");
    detail::require(leapfrog_steps >= 1, "federation: K must be >= 1");
    detail::require(rho >= S(0) && rho <= S(1),
                    "federation: rho must lie in [0, 1]");
    schedule.require_non_increasing();
  }

  /// Per-coordinate standard deviation of node c's momentum,
  /// (ρ + (1−ρ)/w_c)^{1/2}; E‖p^(c)‖² is d times its square.
  S momentum_scale(std::size_t c) const {
    return std::sqrt(rho + (S(1) - rho) / weights.at(c));
  }
};

/**
 * Correlated momenta p^(c) = √ρ ξ + √(1−ρ) ξ^(c)/√w_c with ξ drawn from
 * `shared` and ξ^(c) from `privates[c]`. The weighted average is standard
 * Gaussian. Streams whose coefficient is zero are not drawn from.
 */
template <typename S>
std::vector<Vec<S>> sample_correlated_momentum(S rho,
                                               const std::vector<S>& weights,
                                               Eigen::Index dim, Engine& shared,
                                               std::vector<Engine>& privates) {
  detail::require(rho >= S(0) && rho <= S(1),
                  "sample_correlated_momentum: rho outside [0, 1]");
  detail::require(privates.size() == weights.size() || rho == S(1),
                  "sample_correlated_momentum: one private stream per node");
  std::vector<Vec<S>> out;
  out.reserve(weights.size());
  if (rho == S(1)) {
    const Vec<S> xi = standard_normal<S>(dim, shared);
    out.assign(weights.size(), xi);
    return out;
  }
  const S private_coef = std::sqrt(S(1) - rho);
  if (rho == S(0)) {
    for (std::size_t c = 0; c < weights.size(); ++c)
      out.push_back((private_coef / std::sqrt(weights[c])) *
                    standard_normal<S>(dim, privates[c]));
    return out;
  }
  const Vec<S> shared_part = std::sqrt(rho) * standard_normal<S>(dim, shared);
  for (std::size_t c = 0; c < weights.size(); ++c)
    out.push_back(shared_part + (private_coef / std::sqrt(weights[c])) *
                                    standard_normal<S>(dim, privates[c]));
  return out;
}

namespace detail {

/// Leapfrog with every gradient shifted by a constant vector; a zero
/// shift reproduces plain leapfrog bit for bit.
template <typename S, typename Rng>
LeapfrogResult<S> shifted_leapfrog(const TargetModel<S>& model,
                                   const Vec<S>& theta0, const Vec<S>& p0,
                                   S eta, std::size_t K,
                                   const GradientNoise<S>& noise, Rng& rng,
                                   const Vec<S>& shift) {
  return leapfrog_with<S>(
      [&](const Vec<S>& x) {
        return Vec<S>(stochastic_grad(model, x, noise, rng) + shift);
      },
      noise.is_exact(), theta0, p0, eta, K);
}

}  // namespace detail

/**
 * De-bias leapfrog: every gradient g(θ) becomes
 * g(θ) + (∇f(anchor) − ∇f^(c)(anchor)), where ∇f(anchor) is the
 * broadcast global gradient. The local anchor gradient is evaluated here
 * and counted in gradient_evals.
 */
template <typename S, typename Rng>
LeapfrogResult<S> debias_leapfrog(const TargetModel<S>& model,
                                  const VecArg<S>& theta0, const VecArg<S>& p0,
                                  S eta, std::size_t K,
                                  const VecArg<S>& anchor_theta,
                                  const VecArg<S>& anchor_global_grad,
                                  const GradientNoise<S>& noise, Rng& rng) {
  detail::require(anchor_global_grad.size() == dimension(model) &&
                      anchor_theta.size() == dimension(model),
                  "debias_leapfrog: anchor dimension mismatch");
  const Vec<S> shift = anchor_global_grad - grad(model, anchor_theta);
  auto out = detail::shifted_leapfrog(model, theta0, p0, eta, K, noise, rng,
                                      shift);
  ++out.gradient_evals;
  return out;
}

template <typename S>
LeapfrogResult<S> debias_leapfrog(const TargetModel<S>& model,
                                  const VecArg<S>& theta0, const VecArg<S>& p0,
                                  S eta, std::size_t K,
                                  const VecArg<S>& anchor_theta,
                                  const VecArg<S>& anchor_global_grad) {
  Engine unused(0);
  return debias_leapfrog(model, theta0, p0, eta, K, anchor_theta,
                         anchor_global_grad, GradientNoise<S>::exact(), unused);
}

template <typename S>
struct NodeState {
  Vec<S> theta;
  std::size_t index = 0;
  S momentum_scale = S(1);
};

enum class Variant { fa_hmc, debias };

/**
 * Stateful FA-HMC driver. Each `step()` runs iteration t:
 *
 *  1. draw correlated momenta from the (role, node, t) streams;
 *  2. if t ≡ 0 (mod T), broadcast θ_t = Σ w_c θ^(c)_t to every node
 *     (and, for the de-bias variant, refresh the anchor);
 *  3. advance every node by one leapfrog trajectory of K steps.
 *
 * Randomness depends only on (master seed, node, t), so a sampler
 * constructed with `first_iteration = t0` and the state reached at t0
 * replays the remainder of a run exactly.
 */
template <typename S>
class FederatedSampler {
 public:
  FederatedSampler(FederationConfig<S> config,
                   std::shared_ptr<const std::vector<TargetModel<S>>> models,
                   const Vec<S>& theta0, Variant variant = Variant::fa_hmc,
                   std::size_t first_iteration = 0)
      : config_(std::move(config)),
        models_(std::move(models)),
        streams_(config_.master_seed),
        variant_(variant),
        t_(first_iteration) {
    config_.validate();
    detail::require(models_ && models_->size() == config_.nodes(),
                    "federation: one model per node required");
    for (const auto& m : *models_)
      detail::require(dimension(m) == theta0.size(),
                      "federation: all nodes must share the dimension of θ0");
    for (std::size_t c = 0; c < config_.nodes(); ++c)
      nodes_.push_back({theta0, c, config_.momentum_scale(c)});
    if (variant_ == Variant::debias) shifts_.assign(config_.nodes(), Vec<S>());
  }

  FederatedSampler(FederationConfig<S> config,
                   std::vector<TargetModel<S>> models, const Vec<S>& theta0,
                   Variant variant = Variant::fa_hmc,
                   std::size_t first_iteration = 0)
      : FederatedSampler(
            std::move(config),
            std::make_shared<const std::vector<TargetModel<S>>>(
                std::move(models)),
            theta0, variant, first_iteration) {}

  /// Index of the next iteration to run.
  std::size_t iteration() const noexcept { return t_; }
  const FederationConfig<S>& config() const noexcept { return config_; }
  const std::vector<NodeState<S>>& nodes() const noexcept { return nodes_; }
  std::uint64_t gradient_evals() const noexcept { return gradient_evals_; }
  S last_eta() const noexcept { return last_eta_; }
  bool last_synced() const noexcept { return last_synced_; }
  Eigen::Index dim() const noexcept { return nodes_.front().theta.size(); }

  /// θ = Σ w_c θ^(c), compensated, in node order.
  Vec<S> global_theta() const {
    detail::CompensatedSum<S> sum(dim());
    for (std::size_t c = 0; c < nodes_.size(); ++c)
      sum.add(Vec<S>(config_.weights[c] * nodes_[c].theta));
    return sum.value();
  }

  /// Broadcast step of iteration t: if t ≡ 0 (mod T) every node is reset
  /// to the weighted average. Idempotent within an iteration; `step()`
  /// calls it, callers may call it first to inspect synchronized nodes.
  void synchronize() {
    if (synchronized_for_ && *synchronized_for_ == t_) return;
    synchronized_for_ = t_;
    last_synced_ = t_ % config_.local_steps == 0;
    if (!last_synced_) return;
    const Vec<S> broadcast = global_theta();
    for (auto& node : nodes_) node.theta = broadcast;
    if (variant_ == Variant::debias) refresh_anchor(broadcast);
  }

  void step() {
    const std::size_t t = t_;
    const std::size_t N = nodes_.size();
    const Eigen::Index d = dim();

    Engine shared = streams_.stream(StreamRole::shared_momentum, 0, t);
    std::vector<Engine> privates;
    if (config_.rho < S(1)) {
      privates.reserve(N);
      for (std::size_t c = 0; c < N; ++c)
        privates.push_back(streams_.stream(StreamRole::private_momentum, c, t));
    }
    const std::vector<Vec<S>> momenta = sample_correlated_momentum<S>(
        config_.rho, config_.weights, d, shared, privates);

    synchronize();

    const S eta = config_.schedule(t);
    const std::size_t K = config_.leapfrog_steps;
    for (std::size_t c = 0; c < N; ++c) {
      const TargetModel<S>& model = (*models_)[c];
      auto& node = nodes_[c];
      LeapfrogResult<S> out;
      try {
        if (config_.noise.is_exact()) {
          if (variant_ == Variant::debias) {
            const Vec<S>& shift = shifts_[c];
            out = leapfrog_with<S>(
                [&](const Vec<S>& x) { return Vec<S>(grad(model, x) + shift); },
                true, node.theta, momenta[c], eta, K);
          } else {
            out = leapfrog_with<S>(
                [&](const Vec<S>& x) { return grad(model, x); }, true,
                node.theta, momenta[c], eta, K);
          }
        } else {
          Engine noise_rng = streams_.stream(StreamRole::gradient_noise, c, t);
          out = variant_ == Variant::debias
                    ? detail::shifted_leapfrog(model, node.theta, momenta[c],
                                               eta, K, config_.noise,
                                               noise_rng, shifts_[c])
                    : leapfrog(model, node.theta, momenta[c], eta, K,
                               config_.noise, noise_rng);
        }
      } catch (const DivergenceError& e) {
        throw e.at(t, c);
      }
      node.theta = std::move(out.position);
      gradient_evals_ += out.gradient_evals;
    }
    last_eta_ = eta;
    ++t_;
  }

 private:
  void refresh_anchor(const Vec<S>& broadcast) {
    const std::size_t N = nodes_.size();
    const Eigen::Index d = dim();
    // Lagged anchors start from θ_{−T} = ∇f(θ_{−T}) = 0: the global
    // gradient is zero while each node still evaluates its own
    // gradient at the origin.
    Vec<S> anchor;
    bool zero_global = false;
    if (config_.debias_anchor == DebiasAnchor::current) {
      anchor = broadcast;
    } else if (previous_broadcast_) {
      anchor = std::move(*previous_broadcast_);
    } else {
      anchor = Vec<S>::Zero(d);
      zero_global = true;
    }
    if (config_.debias_anchor == DebiasAnchor::lagged)
      previous_broadcast_ = broadcast;

    std::vector<Vec<S>> local(N);
    detail::CompensatedSum<S> global(d);
    for (std::size_t c = 0; c < N; ++c) {
      local[c] = grad((*models_)[c], anchor);
      ++gradient_evals_;
      global.add(Vec<S>(config_.weights[c] * local[c]));
    }
    const Vec<S> global_grad = zero_global ? Vec<S>(Vec<S>::Zero(d))
                                           : global.value();
    for (std::size_t c = 0; c < N; ++c) shifts_[c] = global_grad - local[c];
  }

  FederationConfig<S> config_;
  std::shared_ptr<const std::vector<TargetModel<S>>> models_;
  StreamFactory streams_;
  Variant variant_;
  std::size_t t_;
  std::vector<NodeState<S>> nodes_;
  std::vector<Vec<S>> shifts_;
  std::optional<Vec<S>> previous_broadcast_;
  std::uint64_t gradient_evals_ = 0;
  S last_eta_ = S(0);
  bool last_synced_ = false;
  std::optional<std::size_t> synchronized_for_;
};

namespace detail {

template <typename S>
ChainTrace<S> drive(FederatedSampler<S>& sampler, std::size_t iterations,
                    std::size_t record_every) {
  detail::require(iterations >= 1, "federation: iterations must be >= 1");
  detail::require(record_every >= 1, "federation: record_every must be >= 1");
  const std::size_t T = sampler.config().local_steps;
  ChainTrace<S> trace;
  trace.first_iteration = sampler.iteration();
  trace.eta_used.reserve(iterations);
  for (std::size_t i = 0; i < iterations; ++i) {
    const std::size_t t = sampler.iteration();
    sampler.step();
    if (sampler.last_synced()) trace.sync_events.push_back(t);
    trace.eta_used.push_back(sampler.last_eta());
    if ((t + 1) % record_every == 0) {
      trace.record_iterations.push_back(t + 1);
      trace.global_params.push_back(sampler.global_theta());
      trace.record_sync.push_back((t + 1) % T == 0 ? 1 : 0);
    }
  }
  trace.gradient_evals = sampler.gradient_evals();
  return trace;
}

}  // namespace detail

/// FA-HMC over `models` from a common start θ0 (every θ^(c)_0 = θ0).
template <typename S>
ChainTrace<S> run_fa_hmc(const FederationConfig<S>& config,
                         const std::vector<TargetModel<S>>& models,
                         const VecArg<S>& theta0, std::size_t iterations,
                         std::size_t record_every = 1,
                         std::size_t first_iteration = 0) {
  FederatedSampler<S> sampler(config, models, theta0, Variant::fa_hmc,
                              first_iteration);
  return detail::drive(sampler, iterations, record_every);
}

/// FA-LD: FA-HMC with a single leapfrog step, i.e. unadjusted Langevin
/// with stepsize η²/2.
template <typename S>
ChainTrace<S> run_fa_ld(FederationConfig<S> config,
                        const std::vector<TargetModel<S>>& models,
                        const VecArg<S>& theta0, std::size_t iterations,
                        std::size_t record_every = 1) {
  config.leapfrog_steps = 1;
  return run_fa_hmc(config, models, theta0, iterations, record_every);
}

template <typename S>
ChainTrace<S> run_debias_fa_hmc(const FederationConfig<S>& config,
                                const std::vector<TargetModel<S>>& models,
                                const VecArg<S>& theta0, std::size_t iterations,
                                std::size_t record_every = 1) {
  FederatedSampler<S> sampler(config, models, theta0, Variant::debias);
  return detail::drive(sampler, iterations, record_every);
}

/// Per-coordinate law of the round-t global parameter in the two-node
/// quadratic fleet under exact shared-momentum dynamics.
template <typename S>
struct LowerBoundMoments {
  S mean;
  S var;
  S gamma;        // per-round contraction
  S fixed_point;  // limit of the mean
  S noise_scale;  // s, per-round noise standard deviation
};

/**
 * Two nodes with potentials (L/2)‖θ − θ*_L 1‖² and (μ/2)‖θ − θ*_μ 1‖²,
 * equal weights, identical momenta, exact Hamiltonian flow of length
 * η̃ = Kη per iteration and T iterations per round. With c_L = cos(√L η̃)
 * and c_μ = cos(√μ η̃):
 *
 *   γ   = ½(c_L^T + c_μ^T)
 *   θ*  = [θ*_L(1 − c_L^T) + θ*_μ(1 − c_μ^T)] / (2(1 − γ))
 *   s   = ½[√(1 − c_L^{2T})/√L + √(1 − c_μ^{2T})/√μ]
 *   mean_t = θ0 γ^t + θ*(1 − γ^t)
 *   var_t  = σ0² γ^{2t} + s²(1 − γ^{2t})/(1 − γ²)
 *
 * `rounds` counts broadcasts, not iterations.
 */
template <typename S>
LowerBoundMoments<S> lower_bound_trajectory(S theta_L, S theta_mu, S L, S mu,
                                            S horizon, std::size_t T,
                                            std::size_t rounds, S theta0,
                                            S sigma0_sq) {
  detail::require(L >= mu && mu > S(0),
                  "lower_bound_trajectory: need L >= mu > 0");
  detail::require(T >= 1, "lower_bound_trajectory: T must be >= 1");
  detail::require(sigma0_sq >= S(0), "lower_bound_trajectory: sigma0² < 0");
  const S cL = std::cos(std::sqrt(L) * horizon);
  const S cM = std::cos(std::sqrt(mu) * horizon);
  const S cLT = std::pow(cL, S(T));
  const S cMT = std::pow(cM, S(T));
  const S gamma = S(0.5) * (cLT + cMT);
  if (!(std::abs(gamma) < S(1)))
    throw ContractViolation(
        "lower_bound_trajectory: degenerate schedule, |γ| = 1 (η̃ = 0?)");
  const S fixed = (theta_L * (S(1) - cLT) + theta_mu * (S(1) - cMT)) /
                  (S(2) * (S(1) - gamma));
  const S s = S(0.5) * (std::sqrt(S(1) - cLT * cLT) / std::sqrt(L) +
                        std::sqrt(S(1) - cMT * cMT) / std::sqrt(mu));
  const S gt = std::pow(gamma, S(rounds));
  const S g2t = gt * gt;
  return {theta0 * gt + fixed * (S(1) - gt),
          sigma0_sq * g2t + s * s * (S(1) - g2t) / (S(1) - gamma * gamma),
          gamma, fixed, s};
}

}  // namespace fahmc
