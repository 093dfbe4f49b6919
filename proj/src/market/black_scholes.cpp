#include "market/black_scholes.hpp"

#include <algorithm>
#include <cmath>

#include "common/errors.hpp"

namespace nsde::market {

namespace {
double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
}  // namespace

double bs_price(double s0, double strike, double rate, double maturity, double vol) {
  if (!(s0 > 0.0 && strike > 0.0 && maturity > 0.0 && vol >= 0.0))
    throw ConfigError("bs_price: invalid input");
  const double df = std::exp(-rate * maturity);
  if (vol == 0.0) return std::max(s0 - strike * df, 0.0);
  const double sd = vol * std::sqrt(maturity);
  const double d1 = (std::log(s0 / strike) + rate * maturity) / sd + 0.5 * sd;
  const double d2 = d1 - sd;
  return s0 * norm_cdf(d1) - strike * df * norm_cdf(d2);
}

std::string to_string(ImpliedVolError e) {
  switch (e) {
    case ImpliedVolError::below_intrinsic: return "price below intrinsic value";
    case ImpliedVolError::above_spot: return "price at or above spot";
    case ImpliedVolError::invalid_input: return "invalid input";
  }
  return "unknown";
}

ImpliedVolResult implied_vol(double price, double s0, double strike, double rate, double maturity,
                             double price_tol) {
  ImpliedVolResult out;
  if (!(std::isfinite(price) && s0 > 0.0 && strike > 0.0 && maturity > 0.0)) {
    out.error = ImpliedVolError::invalid_input;
    return out;
  }
  const double intrinsic = std::max(s0 - strike * std::exp(-rate * maturity), 0.0);
  if (price <= intrinsic) {
    out.error = ImpliedVolError::below_intrinsic;
    return out;
  }
  if (price >= s0) {
    out.error = ImpliedVolError::above_spot;
    return out;
  }
  double lo = 1e-4, hi = 5.0;
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double diff = bs_price(s0, strike, rate, maturity, mid) - price;
    if (std::abs(diff) <= price_tol) break;
    if (diff > 0.0) hi = mid;
    else lo = mid;
    if (hi - lo <= 1e-16) break;
  }
  out.vol = mid;
  return out;
}

}  // namespace nsde::market
