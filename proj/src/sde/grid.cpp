#include "sde/grid.hpp"

#include <cmath>
#include <string>

#include "common/errors.hpp"

namespace nsde::sde {

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) throw ConfigError("TimeGrid: need at least one step");
  if (times_.front() != 0.0) throw ConfigError("TimeGrid: must start at 0");
  for (std::size_t k = 1; k < times_.size(); ++k)
    if (!(times_[k] > times_[k - 1])) throw ConfigError("TimeGrid: times must be strictly increasing");
}

TimeGrid TimeGrid::uniform(double horizon, int steps_per_year) {
  if (!(horizon > 0.0)) throw ConfigError("TimeGrid: horizon must be positive");
  if (steps_per_year <= 0) throw ConfigError("TimeGrid: steps per year must be positive");
  const auto n = static_cast<std::size_t>(std::llround(horizon * steps_per_year));
  if (n == 0) throw ConfigError("TimeGrid: horizon shorter than one step");
  std::vector<double> t(n + 1);
  for (std::size_t k = 0; k <= n; ++k) t[k] = horizon * static_cast<double>(k) / static_cast<double>(n);
  t[n] = horizon;
  return TimeGrid(std::move(t));
}

std::size_t TimeGrid::index_of(double t) const {
  const double tol = 1e-9 * std::max(1.0, horizon());
  std::size_t lo = 0, hi = times_.size();
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (times_[mid] <= t) lo = mid;
    else hi = mid;
  }
  if (std::abs(times_[lo] - t) <= tol) return lo;
  if (lo + 1 < times_.size() && std::abs(times_[lo + 1] - t) <= tol) return lo + 1;
  throw ConfigError("time " + std::to_string(t) + " is not on the simulation grid");
}

}  // namespace nsde::sde
