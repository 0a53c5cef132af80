#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "fahmc/types.hpp"

namespace fahmc {

enum class ScheduleKind { constant, epoch_doubling, piecewise };

/**
 * Stepsize as a function of the iteration index, t ↦ η_t.
 *
 * Epoch doubling holds η_init on [0, t_1) and multiplies by `decay` at
 * each boundary, with epoch lengths t_1, 2t_1, 4t_1, …, so epoch s
 * starts at t_1(2^s − 1). Piecewise schedules are arbitrary positive
 * step functions; `require_non_increasing` is the guard the samplers
 * apply before running.
 */
template <typename S>
class StepsizeSchedule {
 public:
  static StepsizeSchedule constant(S eta) {
    check_positive(eta);
    StepsizeSchedule s;
    s.kind_ = ScheduleKind::constant;
    s.eta_ = eta;
    return s;
  }

  static StepsizeSchedule epoch_doubling(
      S eta_init, std::size_t first_epoch,
      S decay = S(1) / std::numbers::sqrt2_v<S>) {
    check_positive(eta_init);
    detail::require(first_epoch >= 1, "epoch_doubling: first epoch must be >= 1");
    detail::require(decay > S(0) && std::isfinite(decay),
                    "epoch_doubling: decay must be positive");
    StepsizeSchedule s;
    s.kind_ = ScheduleKind::epoch_doubling;
    s.eta_ = eta_init;
    s.first_epoch_ = first_epoch;
    s.decay_ = decay;
    return s;
  }

  /// Breakpoints (start iteration, η); starts strictly increasing from 0.
  static StepsizeSchedule piecewise(
      std::vector<std::pair<std::size_t, S>> breakpoints) {
    detail::require(!breakpoints.empty() && breakpoints.front().first == 0,
                    "piecewise schedule must start at t = 0");
    for (std::size_t i = 0; i < breakpoints.size(); ++i) {
      check_positive(breakpoints[i].second);
      if (i > 0)
        detail::require(breakpoints[i].first > breakpoints[i - 1].first,
                        "piecewise breakpoints must be strictly increasing");
    }
    StepsizeSchedule s;
    s.kind_ = ScheduleKind::piecewise;
    s.eta_ = breakpoints.front().second;
    s.breakpoints_ = std::move(breakpoints);
    return s;
  }

  ScheduleKind kind() const noexcept { return kind_; }
  S initial() const noexcept { return eta_; }
  std::size_t first_epoch() const noexcept { return first_epoch_; }
  S decay() const noexcept { return decay_; }
  const std::vector<std::pair<std::size_t, S>>& breakpoints() const noexcept {
    return breakpoints_;
  }

  S operator()(std::size_t t) const {
    switch (kind_) {
      case ScheduleKind::constant:
        return eta_;
      case ScheduleKind::epoch_doubling:
        return eta_ * std::pow(decay_, S(epoch_of(t)));
      case ScheduleKind::piecewise: {
        S eta = breakpoints_.front().second;
        for (const auto& [start, value] : breakpoints_) {
          if (start > t) break;
          eta = value;
        }
        return eta;
      }
    }
    return eta_;
  }

  /// Epoch index containing iteration t (always 0 unless epoch doubling).
  std::size_t epoch_of(std::size_t t) const noexcept {
    if (kind_ != ScheduleKind::epoch_doubling) return 0;
    return std::bit_width(t / first_epoch_ + 1) - 1;
  }

  /// First iteration of epoch s: t_1(2^s − 1).
  std::size_t epoch_start(std::size_t s) const noexcept {
    if (kind_ != ScheduleKind::epoch_doubling) return 0;
    return first_epoch_ * ((std::size_t{1} << s) - 1);
  }

  void require_non_increasing() const {
    switch (kind_) {
      case ScheduleKind::constant:
        return;
      case ScheduleKind::epoch_doubling:
        detail::require(decay_ <= S(1),
                        "stepsize schedule increases (decay > 1)");
        return;
      case ScheduleKind::piecewise:
        for (std::size_t i = 1; i < breakpoints_.size(); ++i)
          detail::require(
              breakpoints_[i].second <= breakpoints_[i - 1].second,
              "stepsize schedule increases at t = " +
                  std::to_string(breakpoints_[i].first));
        return;
    }
  }

  friend bool operator==(const StepsizeSchedule&,
                         const StepsizeSchedule&) = default;

 private:
  static void check_positive(S eta) {
    detail::require(eta > S(0) && std::isfinite(eta),
                    "stepsize must be positive and finite");
  }

  ScheduleKind kind_ = ScheduleKind::constant;
  S eta_ = S(1);
  std::size_t first_epoch_ = 1;
  S decay_ = S(1);
  std::vector<std::pair<std::size_t, S>> breakpoints_;
};

/// Inputs of the constant-stepsize rule; `weights` may be empty when
/// sigma_g is zero.
template <typename S>
struct StepsizeProblem {
  S epsilon;
  S dim;
  std::size_t local_steps;     // T
  std::size_t leapfrog_steps;  // K
  S L;
  S rho;
  std::size_t nodes;  // N
  S sigma_g;
  std::vector<S> weights;
  S C = S(1);
};

/**
 * Constant stepsize
 *   η² = C·min{1/(K²L), ε/(K²√d T), ε²/(K² d T² (1−ρ) N), ε²/(K d Σw_c² σ_g²)}.
 * Terms whose denominator vanishes (ρ = 1, σ_g = 0) drop out of the min.
 */
template <typename S>
S theorem_stepsize(const StepsizeProblem<S>& p) {
  detail::require(p.epsilon > S(0), "theorem_stepsize: epsilon must be > 0");
  detail::require(p.dim >= S(1), "theorem_stepsize: d must be >= 1");
  detail::require(p.local_steps >= 1 && p.leapfrog_steps >= 1 && p.nodes >= 1,
                  "theorem_stepsize: T, K, N must be >= 1");
  detail::require(p.L > S(0) && p.C > S(0),
                  "theorem_stepsize: L and C must be > 0");
  detail::require(p.rho >= S(0) && p.rho <= S(1),
                  "theorem_stepsize: rho must lie in [0, 1]");
  detail::require(p.sigma_g >= S(0), "theorem_stepsize: sigma_g must be >= 0");

  const S K = S(p.leapfrog_steps);
  const S T = S(p.local_steps);
  const S eps = p.epsilon;
  S best = S(1) / (K * K * p.L);
  best = std::min(best, eps / (K * K * std::sqrt(p.dim) * T));
  const S momentum_term = (S(1) - p.rho) * S(p.nodes);
  if (momentum_term > S(0))
    best = std::min(best, eps * eps / (K * K * p.dim * T * T * momentum_term));
  if (p.sigma_g > S(0)) {
    detail::require(p.weights.size() == p.nodes,
                    "theorem_stepsize: one weight per node required");
    S w2 = 0;
    for (S w : p.weights) w2 += w * w;
    best = std::min(best,
                    eps * eps / (K * p.dim * w2 * p.sigma_g * p.sigma_g));
  }
  return std::sqrt(p.C * best);
}

/// c_d = 128 + 32·ln²(2d).
template <typename S>
S default_cd(S dim) {
  const S l = std::log(S(2) * dim);
  return S(128) + S(32) * l * l;
}

/// Δ̃ = d(T²(γ + (1−ρ)N) + Σ w_c² σ_g² / K).
template <typename S>
S delta_tilde(S dim, std::size_t local_steps, S gamma, S rho,
              std::size_t nodes, const std::vector<S>& weights, S sigma_g,
              std::size_t leapfrog_steps) {
  S w2 = 0;
  for (S w : weights) w2 += w * w;
  const S T = S(local_steps);
  return dim * (T * T * (gamma + (S(1) - rho) * S(nodes)) +
                w2 * sigma_g * sigma_g / S(leapfrog_steps));
}

/**
 * Decaying schedule with a = 2:
 *   (Kη)² = D / (8 c_d Δ̃ L),
 *   t_1   = ⌈−log 8 / (T log(1 − μ(Kη)²/4))⌉ T,
 * η constant on [0, t_1), then divided by √2 at each boundary of epochs
 * whose lengths double. Every boundary is a multiple of T.
 */
/// γ entering Δ̃: the analogue of the theorem stepsize with the K² factors
/// removed. Terms with a zero denominator are dropped.
template <typename S>
S dynamic_gamma(const StepsizeProblem<S>& p) {
  detail::require(p.epsilon > S(0) && p.dim >= S(1) && p.L > S(0),
                  "dynamic_gamma: epsilon, d, L must be positive");
  detail::require(p.local_steps >= 1 && p.leapfrog_steps >= 1 && p.nodes >= 1,
                  "dynamic_gamma: T, K, N must be >= 1");
  detail::require(p.rho >= S(0) && p.rho <= S(1),
                  "dynamic_gamma: rho must lie in [0, 1]");
  const S T = S(p.local_steps);
  const S eps = p.epsilon;
  S best = S(1) / std::sqrt(p.L);
  best = std::min(best, eps / (std::sqrt(p.dim) * T));
  const S momentum_term = (S(1) - p.rho) * S(p.nodes);
  if (momentum_term > S(0))
    best = std::min(best, eps * eps / (p.dim * T * T * momentum_term));
  if (p.sigma_g > S(0)) {
    detail::require(p.weights.size() == p.nodes,
                    "dynamic_gamma: one weight per node required");
    S w2 = 0;
    for (S w : p.weights) w2 += w * w;
    best = std::min(best, eps * eps * S(p.leapfrog_steps) /
                              (p.dim * w2 * p.sigma_g * p.sigma_g));
  }
  return best;
}

template <typename S>
StepsizeSchedule<S> dynamic_schedule(S D, S delta_tilde_value, S L, S mu,
                                     std::size_t leapfrog_steps,
                                     std::size_t local_steps, S c_d) {
  detail::require(D > S(0) && delta_tilde_value > S(0) && L > S(0) &&
                      mu > S(0) && c_d > S(0),
                  "dynamic_schedule: D, Δ̃, L, μ, c_d must be > 0");
  detail::require(leapfrog_steps >= 1 && local_steps >= 1,
                  "dynamic_schedule: K and T must be >= 1");
  const S horizon2 = D / (S(8) * c_d * delta_tilde_value * L);  // (Kη)²
  const S contraction = mu * horizon2 / S(4);
  if (!(contraction < S(1)))
    throw ContractViolation(
        "dynamic_schedule: invalid contraction, μ(Kη)²/4 must be < 1");
  const S T = S(local_steps);
  const S rounds = std::ceil(-std::log(S(8)) / (T * std::log1p(-contraction)));
  const auto first_epoch = static_cast<std::size_t>(rounds) * local_steps;
  const S eta = std::sqrt(horizon2) / S(leapfrog_steps);
  return StepsizeSchedule<S>::epoch_doubling(eta, first_epoch);
}

/// K = max(1, ⌊π/(3η)⌋).
template <typename S>
std::size_t heuristic_K(S eta) {
  detail::require(eta > S(0), "heuristic_K: eta must be > 0");
  const S k = std::floor(std::numbers::pi_v<S> / (S(3) * eta));
  if (!(k >= S(1))) return 1;
  return static_cast<std::size_t>(k);
}

}  // namespace fahmc
