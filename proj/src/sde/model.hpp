#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nets/mlp.hpp"

namespace nsde::sde {

enum class ModelKind { lv, lsv };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

struct ModelConfig {
  ModelKind kind = ModelKind::lv;
  double s0 = 1.0;
  double rate = 0.025;
  std::vector<double> maturities;
  std::vector<int> hidden{50, 50, 50, 50};
  std::uint64_t seed = 1;
  /// softplus of the diffusion output bias at initialisation.
  double initial_vol = 0.2;
  double final_layer_scale = 0.1;
  double initial_v0 = 0.04;
  double initial_rho = 0.0;
};

/// LV:  dS = rS dt + sigma(t, S) S dW.
/// LSV: dS = rS dt + sigma_S(t, S, V) S dW^S,  dV = b_V(t, V) dt + sigma_V(t, V) dW^V,
///      d<W^S, W^V> = rho dt with rho = tanh(rho_hat) and V_0 = v0 trainable.
class NeuralSde {
 public:
  NeuralSde(ad::ParamStore& store, const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ModelKind kind() const { return config_.kind; }
  double rate() const { return config_.rate; }
  double s0() const { return config_.s0; }
  const std::vector<double>& maturities() const { return config_.maturities; }
  double horizon() const { return config_.maturities.back(); }
  std::size_t segment_count() const { return config_.maturities.size(); }

  /// Diffusion of S: sigma (LV) or sigma_S (LSV).
  const nets::SegmentedNet& sigma_s() const { return sigma_s_; }
  const nets::SegmentedNet& drift_v() const { return *drift_v_; }
  const nets::SegmentedNet& sigma_v() const { return *sigma_v_; }
  ad::ParamId v0() const { return *v0_; }
  ad::ParamId rho_hat() const { return *rho_hat_; }

  std::vector<ad::ParamId> params() const;
  /// Parameters owned by maturity segment i. The scalar LSV parameters act
  /// from t = 0 and are attached to segment 0.
  std::vector<ad::ParamId> segment_params(std::size_t i) const;
  void set_segment_frozen(ad::ParamStore& store, std::size_t i, bool frozen) const;

 private:
  ModelConfig config_;
  nets::SegmentedNet sigma_s_;
  std::optional<nets::SegmentedNet> drift_v_;
  std::optional<nets::SegmentedNet> sigma_v_;
  std::optional<ad::ParamId> v0_;
  std::optional<ad::ParamId> rho_hat_;
};

/// Initial output bias giving softplus(bias) = vol.
double softplus_inverse(double vol);

}  // namespace nsde::sde
