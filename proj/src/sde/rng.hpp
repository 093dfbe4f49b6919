#pragma once

#include <array>
#include <cstdint>

namespace nsde::sde {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3").
PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key);

/// 52-bit uniform in the open interval (0, 1).
double uniform_open(std::uint32_t hi, std::uint32_t lo);

/// Standard normal quantile.
double inverse_normal_cdf(double u);

/// Counter-based Gaussian source: every variate is a pure function of
/// (seed, stream, path, step), so any chunking of the path range reproduces
/// the same numbers.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint32_t stream);

  /// Two independent N(0,1) variates for the given path and step.
  std::array<double, 2> pair(std::uint64_t path, std::uint32_t step) const;

  std::uint64_t seed() const { return seed_; }
  std::uint32_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint32_t stream_;
  PhiloxKey key_;
};

}  // namespace nsde::sde
