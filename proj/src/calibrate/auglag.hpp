#pragma once

namespace nsde::calibrate {

struct AugLagState {
  double lambda = 1.0;
  double c = 1.0;
  int updates = 0;
};

/// lambda += c * mse, then c *= 2.
AugLagState auglag_update(const AugLagState& s, double mse);

}  // namespace nsde::calibrate
