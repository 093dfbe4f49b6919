#include "calibrate/auglag.hpp"

#include <cmath>

#include "common/errors.hpp"

namespace nsde::calibrate {

AugLagState auglag_update(const AugLagState& s, double mse) {
  if (!(mse >= 0.0) || !std::isfinite(mse)) throw NumericError("auglag_update: mse must be finite and nonnegative");
  return {s.lambda + s.c * mse, 2.0 * s.c, s.updates + 1};
}

}  // namespace nsde::calibrate
