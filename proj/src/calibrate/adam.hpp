#pragma once

#include <cstdint>
#include <vector>

#include "autodiff/tape.hpp"

namespace nsde::calibrate {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<ad::Matrix> m;
  std::vector<ad::Matrix> v;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const ad::ParamStore& store, const AdamConfig& config);
};

/// One bias-corrected Adam update of every non-frozen parameter at rate lr.
/// Throws NumericError on non-finite gradients.
void adam_step(ad::ParamStore& store, AdamState& state, double lr);
inline void adam_step(ad::ParamStore& store, AdamState& state) { adam_step(store, state, state.config.lr); }

/// lr0 halved every `halving` epochs (no decay when halving <= 0).
double scheduled_lr(double lr0, int epoch, int halving);

}  // namespace nsde::calibrate
