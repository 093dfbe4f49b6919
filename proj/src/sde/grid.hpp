#pragma once

#include <cstddef>
#include <vector>

namespace nsde::sde {

/// Simulation partition 0 = t_0 < ... < t_N = T.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> times);

  /// Uniform grid with round(T * steps_per_year) steps.
  static TimeGrid uniform(double horizon, int steps_per_year = 96);

  std::size_t steps() const { return times_.size() - 1; }
  double time(std::size_t k) const { return times_.at(k); }
  double dt(std::size_t k) const { return times_.at(k + 1) - times_.at(k); }
  double horizon() const { return times_.back(); }
  const std::vector<double>& times() const { return times_; }

  /// Grid index of t; throws ConfigError when t is not a grid point.
  std::size_t index_of(double t) const;

 private:
  std::vector<double> times_;
};

}  // namespace nsde::sde
