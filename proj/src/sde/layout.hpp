#pragma once

#include <cstdint>
#include <vector>

namespace nsde::sde {

/// Contiguous range of base path indices [begin, end).
struct PathRange {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
  std::uint64_t size() const { return end - begin; }
};

/// How a batch of N paths is split into chunks. With antithetic sampling the
/// N/2 base paths are simulated together with their mirrors: a chunk over
/// bases [b0, b1) holds rows b0..b1-1 followed by rows b0+N/2..b1-1+N/2.
struct BatchLayout {
  std::uint64_t paths = 0;
  bool antithetic = true;
  std::uint64_t chunk_paths = 2048;

  void validate() const;
  std::uint64_t bases() const { return antithetic ? paths / 2 : paths; }
  std::uint64_t rows(const PathRange& r) const { return antithetic ? 2 * r.size() : r.size(); }
  std::vector<PathRange> chunks() const;
};

}  // namespace nsde::sde
