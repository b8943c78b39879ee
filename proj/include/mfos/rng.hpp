#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace mfos {

// Seedable 64-bit generator. Child streams are derived from the construction
// seed only, so split(k) does not depend on how many numbers were drawn.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();

  // Unit-rate exponential.
  double exponential();

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform on {0, ..., n - 1}; n must be positive.
  std::size_t uniform_index(std::size_t n);

  // Index sampled from a non-decreasing cumulative weight vector whose last
  // entry is the total mass.
  std::size_t categorical(std::span<const double> cumulative);

  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace mfos
