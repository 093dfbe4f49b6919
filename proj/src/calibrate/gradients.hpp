#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "calibrate/trainer.hpp"

namespace nsde::calibrate {

/// Random streams for the two factors of the squared-loss gradient
/// 2 (E[Phi] - p) E[dPhi]: `weights` prices E[Phi], `derivatives` supplies
/// dPhi. Equal streams give the plug-in gradient; distinct streams make the
/// product of the two factors unbiased.
struct GradientStreams {
  std::uint32_t weights = 0;
  std::uint32_t derivatives = 0;
};

/// Theta gradient (indexed by ParamId, zero-sized where untouched) of the
/// vanilla MSE. With `segment`, parameter derivatives are restricted to that
/// maturity segment and scaled by the segment count; every segment still
/// drives the simulated state.
std::vector<ad::Matrix> mse_gradient(const Trainer& trainer, const sde::NeuralSde& model, ad::ParamStore& theta,
                                     GradientStreams streams, std::optional<std::size_t> segment = std::nullopt);

/// Randomised-maturity estimator for segment u (0-based).
inline std::vector<ad::Matrix> randomized_gradient(const Trainer& trainer, const sde::NeuralSde& model,
                                                   ad::ParamStore& theta, GradientStreams streams, std::size_t u) {
  return mse_gradient(trainer, model, theta, streams, u);
}

/// Component-wise comparison of the measured bias of the plug-in gradient of
/// (E^N[Phi_cv] - p)^2 against (2/N) sd[Phi_cv] sd[dPhi].
struct BiasConfig {
  std::size_t batch_paths = 256;
  std::size_t batches = 2000;
  std::uint64_t reference_paths = 1000000;
  double target = 0.0;
};

struct BiasComponent {
  double bias = 0.0;      // |mean of batch gradients - reference gradient|
  double bound = 0.0;     // (2/N) sd[Phi_cv] sd[dPhi_j]
  double std_error = 0.0; // of the bias estimate
};

struct BiasReport {
  std::vector<BiasComponent> components;
  double payoff_sd = 0.0;  // sd of Phi_cv per path
  std::size_t violations = 0;
  /// Largest bias / (bound + 3 stderr) over components.
  double worst_ratio = 0.0;
  bool holds() const { return violations == 0; }
};

/// Single-instrument task; paths are drawn without antithetic pairing so the
/// batch samples are independent.
BiasReport bias_diagnostic(const sde::NeuralSde& model, ad::ParamStore& theta, const hedge::HedgeNet& hedge,
                           ad::ParamStore& xi, const CalibTask& task, const BiasConfig& config,
                           std::uint64_t seed, bool use_hedge);

/// Trains segment i on the maturity-T_i vanillas with every other segment
/// frozen, for i = 0..N_m-1, `config.epochs` epochs each.
std::vector<std::vector<EpochRecord>> incremental_multi_maturity(const sde::NeuralSde& model, ad::ParamStore& theta,
                                                                 const hedge::HedgeNet& hedge, ad::ParamStore& xi,
                                                                 const CalibTask& task, const TrainConfig& config,
                                                                 const EpochCallback& on_epoch = {});

}  // namespace nsde::calibrate
