#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "calibrate/adam.hpp"
#include "calibrate/auglag.hpp"
#include "common/stats.hpp"
#include "hedge/hedge.hpp"
#include "market/payoff.hpp"
#include "sde/simulate.hpp"

namespace nsde::calibrate {

enum class BoundDirection { none, lower, upper };

std::string to_string(BoundDirection d);
BoundDirection parse_direction(const std::string& s);

struct TrainConfig {
  int epochs = 500;
  double lr_theta = 1e-3;
  double lr_xi = 1e-3;
  int lr_halving = 200;
  sde::BatchLayout layout{40000, true, 512};
  std::uint64_t seed = 1;
  bool use_hedge = true;
  BoundDirection direction = BoundDirection::none;
  // sized for a vanilla MSE of order 1e-6
  double lambda0 = 2000.0;
  double c0 = 1.0;
  int auglag_every = 50;
  bool randomized_maturity = false;
  /// Max Frobenius norm of weight matrices after each step; 0 disables.
  double clip_max_norm = 0.0;
  /// Retained tapes beyond this size are rebuilt for the backward pass.
  std::size_t memory_budget_mb = 2000;
};

/// Instruments priced on one simulation grid. Column j of every payoff and
/// integral matrix is vanillas[j]; the exotic, when present, is last.
struct CalibTask {
  sde::TimeGrid grid = sde::TimeGrid::uniform(1.0);
  std::vector<market::OptionSpec> vanillas;
  std::vector<double> targets;
  std::optional<market::OptionSpec> exotic;
  /// Hedge output used for each column (identity when empty).
  std::vector<std::size_t> hedge_columns;

  std::vector<market::OptionSpec> instruments() const;
  std::size_t last_index() const;
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double mse = 0.0;
  double exotic_price = 0.0;
  double lambda = 0.0;
  double c = 0.0;
};

/// Per-column statistics of one simulated batch.
struct BatchStats {
  std::vector<Moments> payoff;      // raw payoff, one sample per antithetic pair
  std::vector<Moments> controlled;  // payoff minus integral, per pair
  std::vector<Moments> residual;    // payoff minus integral, per path
  std::vector<Moments> raw;         // raw payoff, per path
  std::uint64_t paths = 0;
};

/// One simulated batch, chunk by chunk, with optional retained tapes.
class Batch {
 public:
  struct Chunk {
    sde::PathRange range;
    std::unique_ptr<ad::Tape> theta_tape;
    std::unique_ptr<ad::Tape> xi_tape;
    ad::DiffArray payoff;    // rows x columns
    ad::DiffArray integral;  // rows x columns
  };
  std::uint32_t stream = 0;
  sde::BatchLayout layout;
  std::vector<Chunk> chunks;
  BatchStats stats;
};

/// Shared machinery of every training loop: batch simulation with control
/// variates and chunked, order-stable gradient accumulation.
class Trainer {
 public:
  Trainer(const sde::NeuralSde& model, ad::ParamStore& theta, const hedge::HedgeNet& hedge, ad::ParamStore& xi,
          CalibTask task, TrainConfig config);

  const CalibTask& task() const { return task_; }
  const TrainConfig& config() const { return config_; }
  std::size_t columns() const { return instruments_.size(); }

  /// Simulates a batch on random stream `stream`. Tapes are kept for the
  /// requested parameter sets while they fit in the memory budget.
  Batch evaluate(std::uint32_t stream, const sde::BatchLayout& layout, bool record_theta, bool record_xi) const;

  /// Adds d/dtheta of sum_{i,j} weights_j payoff_ij into the theta gradients.
  void backprop_theta(Batch& batch, const ad::Matrix& weights) const;
  /// Adds d/dxi of sum_j Var(payoff_j - integral_j) over `columns` into the xi gradients.
  void backprop_xi(Batch& batch, const std::vector<std::size_t>& columns) const;

  /// Vanilla prices (control-variated means) and the squared-error summary.
  std::vector<double> vanilla_means(const BatchStats& s) const;
  double mse(const BatchStats& s) const;

  /// dMSE/dmean_j for each column (zero for the exotic).
  ad::Matrix mse_weights(const BatchStats& s) const;

 private:
  Batch::Chunk record_chunk(std::uint32_t stream, const sde::BatchLayout& layout, const sde::PathRange& range,
                            bool record_theta, bool record_xi) const;

  const sde::NeuralSde& model_;
  ad::ParamStore& theta_;
  const hedge::HedgeNet& hedge_;
  ad::ParamStore& xi_;
  CalibTask task_;
  TrainConfig config_;
  std::vector<market::OptionSpec> instruments_;
};

struct InstrumentResult {
  market::OptionSpec spec;
  double target = 0.0;
  Estimate price;      // with control variate
  Estimate raw_price;  // without
  double variance = 0.0;      // per-path variance of payoff minus integral
  double raw_variance = 0.0;  // per-path variance of the payoff
  std::optional<double> model_iv;
  std::optional<double> target_iv;
};

struct CalibReport {
  BoundDirection direction = BoundDirection::none;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::vector<InstrumentResult> instruments;
  std::optional<InstrumentResult> exotic;
  double final_mse = 0.0;
  double seconds = 0.0;
  std::uint64_t eval_paths = 0;
  std::vector<std::pair<double, double>> auglag;  // (lambda, c) after each update
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Alternating theta / xi training (vanilla calibration or price bounds,
/// depending on config.direction). Returns the per-epoch trajectory.
std::vector<EpochRecord> train(const sde::NeuralSde& model, ad::ParamStore& theta, const hedge::HedgeNet& hedge,
                               ad::ParamStore& xi, const CalibTask& task, const TrainConfig& config,
                               AugLagState* auglag = nullptr, const EpochCallback& on_epoch = {});

/// Prices every task instrument on a fresh antithetic batch.
CalibReport evaluate_report(const sde::NeuralSde& model, ad::ParamStore& theta, const hedge::HedgeNet& hedge,
                            ad::ParamStore& xi, const CalibTask& task, const sde::BatchLayout& layout,
                            std::uint64_t seed, bool use_hedge);

}  // namespace nsde::calibrate
