#pragma once

#include <filesystem>
#include <vector>

#include "market/payoff.hpp"
#include "nets/mlp.hpp"
#include "sde/model.hpp"

namespace nsde::hedge {

struct HedgeConfig {
  std::vector<int> hidden{20, 20, 20};
  std::uint64_t seed = 7;
  double final_layer_scale = 0.1;
};

/// Hedging strategy h(t_k, state_k) with one output per instrument. The state
/// is (t / T, S, running max of S[, V]); the running maximum lets the exotic
/// output depend on the path so far.
class HedgeNet {
 public:
  HedgeNet(ad::ParamStore& store, sde::ModelKind kind, double horizon, std::size_t outputs,
           const HedgeConfig& config = {});

  std::size_t outputs() const { return outputs_; }
  std::size_t inputs() const { return kind_ == sde::ModelKind::lsv ? 4 : 3; }
  sde::ModelKind kind() const { return kind_; }
  double horizon() const { return horizon_; }
  const nets::Mlp& net() const { return net_; }
  std::vector<ad::ParamId> params() const { return net_.params(); }

  /// (rows x outputs) hedge positions at grid time t.
  ad::DiffArray forward(nets::Binder& bind, double t, const ad::Matrix& s, const ad::Matrix& running_max,
                        const ad::Matrix* v) const;

 private:
  sde::ModelKind kind_;
  double horizon_;
  std::size_t outputs_;
  nets::Mlp net_;
};

/// Discrete stochastic integrals sum_{k < k_j} h_j(t_k, ...) (e^{-r t_{k+1}} S_{k+1} - e^{-r t_k} S_k),
/// one column per instrument j, stopping at each instrument's maturity. The
/// hedge sees path values only; increments are differentiable through
/// `paths` when they are attached.
ad::DiffArray stoch_integral(const HedgeNet& hedge, nets::Binder& bind, const sde::PathChunk& paths,
                             const sde::TimeGrid& grid, double rate,
                             const std::vector<market::OptionSpec>& instruments);

/// Column j integrates hedge output outputs[j] up to instruments[j]'s maturity.
ad::DiffArray stoch_integral(const HedgeNet& hedge, nets::Binder& bind, const sde::PathChunk& paths,
                             const sde::TimeGrid& grid, double rate,
                             const std::vector<market::OptionSpec>& instruments,
                             const std::vector<std::size_t>& outputs);

/// Single-instrument form; `use_detached` feeds the detached copy of the paths.
ad::DiffArray stoch_integral(const HedgeNet& hedge, nets::Binder& bind, const sde::PathChunk& paths,
                             const sde::TimeGrid& grid, double rate,
                             const std::vector<market::OptionSpec>& instruments, std::size_t index,
                             bool use_detached);

/// sum_j sample variance over paths of (payoffs_j - integrals_j).
ad::DiffArray variance_objective(const ad::DiffArray& payoffs, const ad::DiffArray& integrals);

struct HedgeErrorStats {
  std::vector<double> residuals;
  double mean_square = 0.0;
};

/// s_i = Psi_i - integral_i - mean(Psi); mean_square = (1/N) sum s_i^2.
HedgeErrorStats hedge_error_stats(const std::vector<double>& payoff, const std::vector<double>& integral);

/// CSV with a single `residual` column.
void write_residuals(const std::filesystem::path& path, const std::vector<double>& residuals);

}  // namespace nsde::hedge
