#include "sde/layout.hpp"

#include <algorithm>

#include "common/errors.hpp"

namespace nsde::sde {

void BatchLayout::validate() const {
  if (paths < 2) throw ConfigError("batch size must be at least 2");
  if (antithetic && paths % 2 != 0) throw ConfigError("antithetic sampling needs an even batch size");
  if (chunk_paths < 2) throw ConfigError("chunk size must be at least 2");
}

std::vector<PathRange> BatchLayout::chunks() const {
  validate();
  const std::uint64_t per = std::max<std::uint64_t>(1, antithetic ? chunk_paths / 2 : chunk_paths);
  std::vector<PathRange> out;
  for (std::uint64_t b = 0; b < bases(); b += per) out.push_back({b, std::min(bases(), b + per)});
  return out;
}

}  // namespace nsde::sde
