#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace gpf {

/// SplitMix64 finaliser. Used to derive independent stream seeds from
/// (base seed, index) pairs.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// Seedable random stream. All draws are defined in terms of the raw
/// mt19937_64 output so a stream is reproducible bit-for-bit within one
/// build, independent of the standard library's distribution classes.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  int uniform_int(int n);

  /// Standard normal (Box-Muller, one variate per call, no cached spare).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Poisson variate by sequential inversion. Intended for small means.
  int poisson(double mean);

  /// Opaque textual engine state; round-trips through deserialize().
  std::string serialize() const;
  void deserialize(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
  std::mt19937_64 engine_;
};

}  // namespace gpf
