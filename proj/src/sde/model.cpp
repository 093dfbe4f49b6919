#include "sde/model.hpp"

#include <cmath>

namespace nsde::sde {

std::string to_string(ModelKind k) { return k == ModelKind::lsv ? "lsv" : "lv"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "lv" || s == "LV") return ModelKind::lv;
  if (s == "lsv" || s == "LSV") return ModelKind::lsv;
  throw ConfigError("unknown model kind '" + s + "'");
}

double softplus_inverse(double vol) {
  if (!(vol > 0.0)) throw ConfigError("softplus_inverse: argument must be positive");
  return std::log(std::expm1(vol));
}

namespace {

std::vector<int> layer_sizes(int inputs, const std::vector<int>& hidden) {
  std::vector<int> s{inputs};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(1);
  return s;
}

nets::MlpInit diffusion_init(const ModelConfig& c) {
  return {c.final_layer_scale, softplus_inverse(c.initial_vol)};
}

}  // namespace

NeuralSde::NeuralSde(ad::ParamStore& store, const ModelConfig& c)
    : config_(c),
      sigma_s_(store, c.kind == ModelKind::lv ? "sigma" : "sigma_s", c.maturities,
               layer_sizes(c.kind == ModelKind::lv ? 2 : 3, c.hidden), nets::OutputTransform::softplus,
               c.seed, diffusion_init(c)) {
  if (!(c.s0 > 0.0)) throw ConfigError("model: s0 must be positive");
  if (c.kind == ModelKind::lsv) {
    drift_v_.emplace(store, "drift_v", c.maturities, layer_sizes(2, c.hidden),
                     nets::OutputTransform::identity, c.seed, nets::MlpInit{c.final_layer_scale, {}});
    sigma_v_.emplace(store, "sigma_v", c.maturities, layer_sizes(2, c.hidden),
                     nets::OutputTransform::softplus, c.seed, diffusion_init(c));
    if (!(c.initial_rho > -1.0 && c.initial_rho < 1.0)) throw ConfigError("model: rho must lie in (-1, 1)");
    v0_ = store.add("v0", ad::Matrix::Constant(1, 1, c.initial_v0));
    rho_hat_ = store.add("rho_hat", ad::Matrix::Constant(1, 1, std::atanh(c.initial_rho)));
  }
}

std::vector<ad::ParamId> NeuralSde::params() const {
  std::vector<ad::ParamId> out;
  for (std::size_t i = 0; i < segment_count(); ++i) {
    auto p = segment_params(i);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<ad::ParamId> NeuralSde::segment_params(std::size_t i) const {
  std::vector<ad::ParamId> out = sigma_s_.segment_params(i);
  if (kind() == ModelKind::lsv) {
    for (auto id : drift_v_->segment_params(i)) out.push_back(id);
    for (auto id : sigma_v_->segment_params(i)) out.push_back(id);
    if (i == 0) {
      out.push_back(*v0_);
      out.push_back(*rho_hat_);
    }
  }
  return out;
}

void NeuralSde::set_segment_frozen(ad::ParamStore& store, std::size_t i, bool frozen) const {
  for (auto id : segment_params(i)) store.set_frozen(id, frozen);
}

}  // namespace nsde::sde
