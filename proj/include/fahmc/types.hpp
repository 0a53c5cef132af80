#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>

#include <Eigen/Dense>

namespace fahmc {

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Vector parameter that does not take part in deducing S, so Eigen
/// expressions bind when S is fixed by another argument.
template <typename S>
using VecArg = std::type_identity_t<Vec<S>>;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

/// Row-major sample matrix: one row per draw, one column per coordinate.
template <typename S>
using SampleMatrix =
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A caller broke a documented precondition (dimension mismatch, bad
/// parameter range, empty input).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The requested noise model cannot be applied to the given target.
class UnsupportedCombination : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/**
 * A trajectory produced a non-finite coordinate.
 *
 * Unadjusted samplers have no rejection step to absorb a blown-up
 * trajectory, so the error carries enough context to locate it: the
 * leapfrog step always, the outer iteration and node when known.
 */
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, std::optional<std::size_t> iteration = {},
                  std::optional<std::size_t> node = {})
      : std::runtime_error(describe(step, iteration, node)),
        step_(step),
        iteration_(iteration),
        node_(node) {}

  std::size_t step() const noexcept { return step_; }
  std::optional<std::size_t> iteration() const noexcept { return iteration_; }
  std::optional<std::size_t> node() const noexcept { return node_; }

  DivergenceError at(std::optional<std::size_t> iteration,
                     std::optional<std::size_t> node) const {
    return DivergenceError(step_, iteration ? iteration : iteration_,
                           node ? node : node_);
  }

 private:
  static std::string describe(std::size_t step,
                              std::optional<std::size_t> iteration,
                              std::optional<std::size_t> node) {
    std::string msg = "non-finite state at leapfrog step " +
                      std::to_string(step);
    if (iteration) msg += ", iteration " + std::to_string(*iteration);
    if (node) msg += ", node " + std::to_string(*node);
    return msg;
  }

  std::size_t step_;
  std::optional<std::size_t> iteration_;
  std::optional<std::size_t> node_;
};

namespace detail {

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ContractViolation(what);
}

/// Neumaier compensated accumulator for vectors; summation order is
/// the order of `add` calls.
template <typename S>
class CompensatedSum {
 public:
  explicit CompensatedSum(Eigen::Index dim)
      : sum_(Vec<S>::Zero(dim)), comp_(Vec<S>::Zero(dim)) {}

  void add(const Vec<S>& x) {
    for (Eigen::Index i = 0; i < sum_.size(); ++i) {
      const S t = sum_[i] + x[i];
      if (std::abs(sum_[i]) >= std::abs(x[i]))
        comp_[i] += (sum_[i] - t) + x[i];
      else
        comp_[i] += (x[i] - t) + sum_[i];
      sum_[i] = t;
    }
  }

  Vec<S> value() const { return sum_ + comp_; }

 private:
  Vec<S> sum_;
  Vec<S> comp_;
};

}  // namespace detail

}  // namespace fahmc
