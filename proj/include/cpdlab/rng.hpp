#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace cpdlab {

/// xoshiro256** seeded through SplitMix64.
///
/// The generator is fixed for the lifetime of the project: every dataset,
/// initialisation and Monte-Carlo estimate is a pure function of the seed.
/// Independent streams come from `derive_seed(seed, stream)`, never from
/// sharing one generator across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();
  /// Beta(a, 1) by inverse CDF: U^(1/a).
  double beta_a1(double a);
  /// Poisson(mean): sequential inversion below mean 10, Hormann's PTRS
  /// transformed rejection above.
  std::uint64_t poisson(double mean);

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic sub-seed for stream `stream` of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// FNV-1a, used to turn experiment cell keys into stream ids.
std::uint64_t hash_key(std::string_view key);

}  // namespace cpdlab
