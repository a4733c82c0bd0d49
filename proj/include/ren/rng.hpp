#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace ren {

/// Combines seed components into a new, well-mixed 64-bit seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Counter-based random stream. Draw number `counter` of a stream is a pure
/// function of (seed, counter), so results never depend on thread schedules.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  std::uint64_t operator()() { return next_u64(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller; consumes two draws.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream, e.g. one per sample or per epoch.
  RngStream fork(std::uint64_t stream_id) const { return RngStream(mix_seed(seed_, stream_id)); }

  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return std::numeric_limits<std::uint64_t>::max(); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// Fisher-Yates permutation of 0..n-1 driven by `rng`.
std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& rng);

}  // namespace ren
