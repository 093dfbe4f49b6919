#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "common/stats.hpp"

namespace nsde::market {

struct Quote {
  double maturity = 0.0;
  double strike = 0.0;
  double price = 0.0;
  double std_error = 0.0;
};

/// Grid of discounted call prices, ordered by maturity then strike.
struct MarketSurface {
  std::vector<Quote> quotes;

  std::vector<double> maturities() const;
  std::vector<double> strikes_at(double maturity) const;
  /// Quotes whose maturity equals t (exactly, as stored).
  std::vector<Quote> at(double maturity) const;
  /// Messages for call prices increasing in strike by more than 3 stderr.
  std::vector<std::string> monotonicity_warnings() const;
};

/// Strikes 1 - 0.01 (n - 1), ..., 1 + 0.01 (n - 1) for n in {11, 21, 31, 41}.
std::vector<double> strike_preset(int count);
/// {2, 4, ..., 12} / 12 truncated to the first `count`.
std::vector<double> bimonthly_maturities(int count = 6);

/// CSV `maturity,strike,price,stderr` with 17 significant digits.
void write_surface(const std::filesystem::path& path, const MarketSurface& s);
MarketSurface read_surface(const std::filesystem::path& path);

struct LookbackQuote {
  double maturity = 0.0;
  double price = 0.0;
  double std_error = 0.0;
};

/// CSV `maturity,price,stderr`.
void write_lookback(const std::filesystem::path& path, const std::vector<LookbackQuote>& q);
std::vector<LookbackQuote> read_lookback(const std::filesystem::path& path);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

}  // namespace nsde::market
