#include "macstab/rng.hpp"

#include <algorithm>
#include <cmath>

#include "macstab/errors.hpp"

namespace macstab {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t state = seed;
  const std::uint64_t a = splitmix64(state);
  state ^= stream * 0xd1b54a32d192ed03ULL;
  const std::uint64_t b = splitmix64(state);
  std::uint64_t mixed = a ^ (b + 0x632be59bd9b4e019ULL);
  return std::mt19937_64(splitmix64(mixed));
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : engine_(make_engine(seed, stream)) {}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw DomainError("Rng::below requires n > 0");
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::int64_t Rng::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean))
    throw DomainError("Poisson mean must be finite and non-negative");
  std::int64_t total = 0;
  while (mean > 0.0) {
    const double mu = std::min(mean, 64.0);
    mean -= mu;
    const double u = uniform();
    double p = std::exp(-mu);
    double cdf = p;
    std::int64_t k = 0;
    while (u >= cdf && p > 0.0) {
      ++k;
      p *= mu / static_cast<double>(k);
      cdf += p;
    }
    total += k;
  }
  return total;
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (!(sum > 0.0)) throw DomainError("categorical weights must not all be zero");
  const double u = uniform() * sum;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

}  // namespace macstab
