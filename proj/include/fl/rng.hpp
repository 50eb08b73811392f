#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace fl {

/// splitmix64 finalizer; used to expand seeds and derive independent streams.
std::uint64_t splitmix64(std::uint64_t& state);

/// Mixes a base seed with a list of stream identifiers (round, client index,
/// purpose tag, ...) into a new seed. Order-sensitive.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> stream);

/// xoshiro256** seeded through splitmix64.
///
/// Every random draw in the framework (sampling, shuffling, init, synthetic
/// data) goes through this generator with the helpers below, so results are
/// reproducible across platforms and can be mirrored by other client
/// implementations. std:: distributions are deliberately not used since their
/// algorithms are implementation-defined.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next(); }

  std::uint64_t next();

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal via Box-Muller (no cached second value).
  double normal();

 private:
  std::uint64_t s_[4];
};

}  // namespace fl
