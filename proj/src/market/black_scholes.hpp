#pragma once

#include <optional>
#include <string>

namespace nsde::market {

/// Black-Scholes call price.
double bs_price(double s0, double strike, double rate, double maturity, double vol);

enum class ImpliedVolError { below_intrinsic, above_spot, invalid_input };

std::string to_string(ImpliedVolError e);

struct ImpliedVolResult {
  std::optional<double> vol;
  std::optional<ImpliedVolError> error;
  explicit operator bool() const { return vol.has_value(); }
};

/// Bisection on [1e-4, 5] until the price error is at most price_tol.
ImpliedVolResult implied_vol(double price, double s0, double strike, double rate, double maturity,
                             double price_tol = 1e-10);

}  // namespace nsde::market
