#pragma once

#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>

#include "fahmc/types.hpp"

namespace fahmc {

using Engine = std::mt19937_64;

/// What a stream is used for. Part of the stream identity, so two roles
/// never share draws even at the same (node, iteration).
enum class StreamRole : std::uint64_t {
  shared_momentum = 1,
  private_momentum = 2,
  gradient_noise = 3,
  initialization = 4,
  reference = 5,
  probe = 6,
  data = 7,
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/**
 * Keyed source of independent random streams.
 *
 * A stream is identified by (master seed, role, node, iteration) and
 * derived by hashing the key, so the draws a node sees at iteration t do
 * not depend on how many draws anyone else made or on execution order.
 */
class StreamFactory {
 public:
  explicit StreamFactory(std::uint64_t master_seed = 0) noexcept
      : master_(master_seed) {}

  std::uint64_t master_seed() const noexcept { return master_; }

  Engine stream(StreamRole role, std::uint64_t node,
                std::uint64_t iteration) const {
    std::uint64_t h = detail::splitmix64(master_);
    h = detail::splitmix64(h ^ static_cast<std::uint64_t>(role));
    h = detail::splitmix64(h ^ node);
    h = detail::splitmix64(h ^ iteration);
    return Engine(h);
  }

  /// A factory for an independent replicate, e.g. one of many seeds in
  /// a Monte Carlo ensemble.
  StreamFactory replicate(std::uint64_t index) const noexcept {
    return StreamFactory(
        detail::splitmix64(master_ ^ detail::splitmix64(index + 0x5151)));
  }

 private:
  std::uint64_t master_;
};

template <typename S, typename Rng>
Vec<S> standard_normal(Eigen::Index dim, Rng& rng) {
  // ziggurat; about twice as fast as the libstdc++ polar method
  boost::random::normal_distribution<S> normal(S(0), S(1));
  Vec<S> out(dim);
  for (Eigen::Index i = 0; i < dim; ++i) out[i] = normal(rng);
  return out;
}

}  // namespace fahmc
