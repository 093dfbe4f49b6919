#pragma once

#include <cstdint>
#include <vector>

#include "common/stats.hpp"
#include "market/surface.hpp"
#include "sde/layout.hpp"

namespace nsde::market {

struct HestonParams {
  double x0 = 1.0;
  double rate = 0.025;
  double kappa = 0.78;
  double mu = 0.11;
  double eta = 0.68;
  double v0 = 0.04;
  double rho = 0.044;

  void validate() const;
};

struct HestonRun {
  std::uint64_t paths = 400000;
  bool antithetic = true;
  std::uint64_t seed = 2024;
  int steps_per_year = 96;
  std::uint64_t chunk_paths = 8192;
};

/// Surface of discounted calls and puts with the discounted terminal asset,
/// all from the same paths.
struct HestonSurface {
  MarketSurface calls;
  MarketSurface puts;
  std::vector<Estimate> discounted_spot;  // e^{-rT} S_T per maturity
};

/// Tamed Euler on (X, V) with V+ = max(V, 0) under every square root.
HestonSurface heston_mc_surface(const HestonParams& p, const std::vector<double>& maturities,
                                const std::vector<double>& strikes, const HestonRun& run);

/// e^{-rT} E[max_k X_{t_k} - X_T] over the simulation grid, per maturity.
std::vector<Estimate> heston_mc_lookback(const HestonParams& p, const std::vector<double>& maturities,
                                         const HestonRun& run);

}  // namespace nsde::market
