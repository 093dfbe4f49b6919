#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sde/simulate.hpp"

namespace nsde::market {

enum class OptionKind { european_call, european_put, lookback_call };

/// "call", "put" or "lookback".
std::string to_string(OptionKind k);
OptionKind parse_option_kind(const std::string& s);

struct OptionSpec {
  OptionKind kind = OptionKind::european_call;
  double maturity = 1.0;
  double strike = 1.0;  // unused for lookback

  static OptionSpec call(double t, double k) { return {OptionKind::european_call, t, k}; }
  static OptionSpec put(double t, double k) { return {OptionKind::european_put, t, k}; }
  static OptionSpec lookback(double t) { return {OptionKind::lookback_call, t, 0.0}; }

  void validate() const;
  std::string label() const;
};

/// Per-path discounted payoff (rows x 1), differentiable through the paths.
ad::DiffArray payoff(const OptionSpec& spec, const sde::PathChunk& paths, const sde::TimeGrid& grid,
                     double rate);

/// Payoffs of several options side by side (rows x specs.size()).
ad::DiffArray payoffs(const std::vector<OptionSpec>& specs, const sde::PathChunk& paths,
                      const sde::TimeGrid& grid, double rate);

}  // namespace nsde::market
