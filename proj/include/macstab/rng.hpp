#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace macstab {

/// Seedable generator with a stream defined entirely by this header and
/// the C++ standard: std::mt19937_64 (whose output sequence is fixed by the
/// standard) seeded through SplitMix64 of (seed, stream). The variate
/// transforms below are our own, so results do not depend on the standard
/// library's distribution implementations.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  bool bernoulli(double p);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Poisson variate by inversion, split into chunks of mean <= 64.
  std::int64_t poisson(double mean);
  /// Index drawn from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace macstab
