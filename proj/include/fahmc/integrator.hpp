#pragma once

#include <cmath>
#include <cstddef>
#include <utility>

#include "fahmc/models.hpp"
#include "fahmc/random.hpp"
#include "fahmc/schedules.hpp"
#include "fahmc/trace.hpp"
#include "fahmc/types.hpp"

namespace fahmc {

template <typename S>
struct LeapfrogResult {
  Vec<S> position;
  Vec<S> momentum;
  std::size_t gradient_evals = 0;
};

/// A point in phase space.
template <typename S>
struct PhasePoint {
  Vec<S> position;
  Vec<S> momentum;
};

/**
 * K leapfrog steps with unit mass and an arbitrary gradient oracle.
 *
 *   θ_{k+1} = θ_k + ηp_k − (η²/2) g_k
 *   p_{k+1} = p_k − (η/2)(g_k + g'_{k+1})
 *
 * g_k is evaluated once per step and feeds both updates. When
 * `reuse_gradient` is set (deterministic oracles) g'_{k+1} doubles as
 * g_{k+1}, giving K + 1 evaluations; otherwise g_{k+1} is a fresh call
 * and the final position is evaluated once, giving 2K.
 */
template <typename S, typename GradientOracle>
LeapfrogResult<S> leapfrog_with(GradientOracle&& gradient,
                                bool reuse_gradient, Vec<S> theta, Vec<S> p,
                                S eta, std::size_t K) {
  detail::require(theta.size() == p.size(),
                  "leapfrog: position and momentum dimensions differ");
  detail::require(K >= 1, "leapfrog: K must be >= 1");
  detail::require(eta > S(0) && std::isfinite(eta),
                  "leapfrog: eta must be positive and finite");
  const S half_eta = eta / S(2);
  const S half_eta2 = eta * eta / S(2);

  std::size_t evals = 1;
  Vec<S> g = gradient(theta);
  for (std::size_t k = 0; k < K; ++k) {
    theta += eta * p - half_eta2 * g;
    Vec<S> g_next = gradient(theta);
    ++evals;
    p -= half_eta * (g + g_next);
    if (!theta.allFinite() || !p.allFinite()) throw DivergenceError(k + 1);
    if (k + 1 == K) break;
    if (reuse_gradient) {
      g = std::move(g_next);
    } else {
      g = gradient(theta);
      ++evals;
    }
  }
  return {std::move(theta), std::move(p), evals};
}

/// Stochastic-gradient leapfrog on one node potential.
template <typename S, typename Rng>
LeapfrogResult<S> leapfrog(const TargetModel<S>& model, const VecArg<S>& theta0,
                           const VecArg<S>& p0, S eta, std::size_t K,
                           const GradientNoise<S>& noise, Rng& rng) {
  detail::require(theta0.size() == dimension(model),
                  "leapfrog: dimension mismatch with model");
  return leapfrog_with<S>(
      [&](const Vec<S>& x) { return stochastic_grad(model, x, noise, rng); },
      noise.is_exact(), theta0, p0, eta, K);
}

/**
 * Exact flow of dθ/dt = p, dp/dt = −λ(θ − m) for time t:
 *   θ(t) = m + (θ0 − m) cos(√λ t) + p0 sin(√λ t)/√λ
 *   p(t) = −√λ (θ0 − m) sin(√λ t) + p0 cos(√λ t)
 */
template <typename S>
PhasePoint<S> closed_form_quadratic(const Vec<S>& theta0, const Vec<S>& p0,
                                    S precision, const Vec<S>& mean, S t) {
  detail::require(precision > S(0), "closed_form_quadratic: precision <= 0");
  detail::require(t >= S(0), "closed_form_quadratic: negative time");
  detail::require(theta0.size() == p0.size() && theta0.size() == mean.size(),
                  "closed_form_quadratic: dimension mismatch");
  const S omega = std::sqrt(precision);
  const S c = std::cos(omega * t);
  const S s = std::sin(omega * t);
  const Vec<S> offset = theta0 - mean;
  return {mean + c * offset + (s / omega) * p0,
          -omega * s * offset + c * p0};
}

/**
 * Unadjusted HMC: each iteration draws p_t ~ N(0, I) and replaces θ by
 * the leapfrog endpoint, with no accept/reject step.
 *
 * Iteration t draws its momentum from the (shared_momentum, 0, t)
 * stream and its gradient noise from (gradient_noise, 0, t), which is
 * the single-node case of the federated driver's stream layout.
 */
template <typename S>
ChainTrace<S> hmc_chain(const TargetModel<S>& model, const VecArg<S>& theta0,
                        const StepsizeSchedule<S>& schedule, std::size_t K,
                        const GradientNoise<S>& noise, std::size_t iterations,
                        const StreamFactory& streams,
                        std::size_t record_every = 1) {
  detail::require(iterations >= 1, "hmc_chain: iterations must be >= 1");
  detail::require(record_every >= 1, "hmc_chain: record_every must be >= 1");
  detail::require(theta0.size() == dimension(model),
                  "hmc_chain: dimension mismatch");
  schedule.require_non_increasing();

  ChainTrace<S> trace;
  trace.eta_used.reserve(iterations);
  Vec<S> theta = theta0;
  for (std::size_t t = 0; t < iterations; ++t) {
    Engine momentum_rng = streams.stream(StreamRole::shared_momentum, 0, t);
    const Vec<S> p = standard_normal<S>(theta.size(), momentum_rng);
    const S eta = schedule(t);
    LeapfrogResult<S> step;
    try {
      if (noise.is_exact()) {
        step = leapfrog_with<S>(
            [&](const Vec<S>& x) { return grad(model, x); }, true, theta, p,
            eta, K);
      } else {
        Engine noise_rng = streams.stream(StreamRole::gradient_noise, 0, t);
        step = leapfrog(model, theta, p, eta, K, noise, noise_rng);
      }
    } catch (const DivergenceError& e) {
      throw e.at(t, std::nullopt);
    }
    theta = std::move(step.position);
    trace.gradient_evals += step.gradient_evals;
    trace.eta_used.push_back(eta);
    if ((t + 1) % record_every == 0) {
      trace.record_iterations.push_back(t + 1);
      trace.global_params.push_back(theta);
      trace.record_sync.push_back(0);
    }
  }
  return trace;
}

}  // namespace fahmc
