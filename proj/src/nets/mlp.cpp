#include "nets/mlp.hpp"

#include <cmath>

#include "sde/rng.hpp"

namespace nsde::nets {

std::string to_string(OutputTransform t) {
  return t == OutputTransform::softplus ? "softplus" : "identity";
}

OutputTransform parse_output_transform(const std::string& s) {
  if (s == "softplus") return OutputTransform::softplus;
  if (s == "identity") return OutputTransform::identity;
  throw ConfigError("unknown output transform '" + s + "'");
}

std::size_t mlp_parameter_count(std::span<const int> sizes) {
  std::size_t n = 0;
  for (std::size_t k = 1; k < sizes.size(); ++k)
    n += static_cast<std::size_t>(sizes[k - 1]) * sizes[k] + sizes[k];
  return n;
}

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Binder::Binder(ad::ParamStore& store, ad::Tape* tape)
    : store_(&store), tape_(tape), cache_(store.size()) {}

ad::DiffArray Binder::operator()(ad::ParamId id) {
  if (id.index >= cache_.size()) cache_.resize(store_->size());
  ad::DiffArray& slot = cache_[id.index];
  if (slot.empty()) {
    slot = tape_ ? tape_->param(*store_, id) : ad::DiffArray::constant(store_->value(id));
  }
  return slot;
}

Mlp::Mlp(ad::ParamStore& store, const std::string& prefix, std::vector<int> sizes,
         OutputTransform output, std::uint64_t seed, const MlpInit& init)
    : sizes_(std::move(sizes)), output_(output) {
  if (sizes_.size() < 2) throw ConfigError("Mlp '" + prefix + "': need at least input and output sizes");
  for (int s : sizes_)
    if (s <= 0) throw ConfigError("Mlp '" + prefix + "': layer sizes must be positive");

  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t k = 0; k < layers; ++k) {
    const int fan_in = sizes_[k];
    const int fan_out = sizes_[k + 1];
    const sde::NormalStream normals(seed, static_cast<std::uint32_t>(k));
    double scale = std::sqrt(2.0 / fan_in);
    if (k + 1 == layers) scale *= init.final_weight_scale;
    ad::Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i)
      w.data()[i] = scale * normals.pair(static_cast<std::uint64_t>(i), 0)[0];
    ad::Matrix b = ad::Matrix::Zero(1, fan_out);
    if (k + 1 == layers && init.output_bias) b.setConstant(*init.output_bias);
    weights_.push_back(store.add(prefix + ".W" + std::to_string(k + 1), std::move(w)));
    biases_.push_back(store.add(prefix + ".B" + std::to_string(k + 1), std::move(b)));
  }
}

ad::DiffArray Mlp::forward(Binder& bind, const ad::DiffArray& x) const {
  if (x.cols() != sizes_.front()) throw ShapeError("Mlp::forward: input width mismatch");
  ad::DiffArray h = x;
  const std::size_t layers = weights_.size();
  for (std::size_t k = 0; k < layers; ++k) {
    h = k + 1 < layers ? ad::affine_relu(h, bind(weights_[k]), bind(biases_[k]))
                       : ad::affine(h, bind(weights_[k]), bind(biases_[k]));
  }
  if (output_ == OutputTransform::softplus) h = ad::softplus(h);
  return h;
}

std::vector<ad::ParamId> Mlp::params() const {
  std::vector<ad::ParamId> out;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    out.push_back(weights_[k]);
    out.push_back(biases_[k]);
  }
  return out;
}

SegmentedNet::SegmentedNet(ad::ParamStore& store, const std::string& prefix,
                           std::vector<double> maturities, std::vector<int> sizes,
                           OutputTransform output, std::uint64_t seed, const MlpInit& init)
    : maturities_(std::move(maturities)) {
  if (maturities_.empty()) throw ConfigError("SegmentedNet '" + prefix + "': no maturities");
  double prev = 0.0;
  for (double m : maturities_) {
    if (!(m > prev)) throw ConfigError("SegmentedNet '" + prefix + "': maturities must be increasing and positive");
    prev = m;
  }
  for (std::size_t i = 0; i < maturities_.size(); ++i) {
    const std::string name = prefix + ".seg" + std::to_string(i);
    segments_.emplace_back(store, name, sizes, output, seed ^ name_hash(name), init);
  }
}

std::size_t SegmentedNet::segment_at(double t) const {
  constexpr double kTol = 1e-12;
  if (!(t >= -kTol && t <= horizon() + kTol))
    throw ConfigError("SegmentedNet: time " + std::to_string(t) + " outside [0, T]");
  for (std::size_t i = 0; i < maturities_.size(); ++i)
    if (t < maturities_[i] - kTol) return i;
  return maturities_.size() - 1;
}

ad::DiffArray SegmentedNet::forward(Binder& bind, double t, const ad::DiffArray& state) const {
  const std::size_t seg = segment_at(t);
  const ad::DiffArray parts[] = {ad::DiffArray::filled(state.rows(), 1, t / horizon()), state};
  return segments_[seg].forward(bind, ad::concat_cols(parts));
}

void SegmentedNet::set_frozen(ad::ParamStore& store, std::size_t segment, bool frozen) const {
  for (auto id : segments_.at(segment).params()) store.set_frozen(id, frozen);
}

std::vector<ad::ParamId> SegmentedNet::params() const {
  std::vector<ad::ParamId> out;
  for (const auto& s : segments_) {
    auto p = s.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<ad::ParamId> SegmentedNet::segment_params(std::size_t segment) const {
  return segments_.at(segment).params();
}

void clip_weights(ad::ParamStore& store, std::span<const ad::ParamId> ids, double max_norm) {
  for (auto id : ids) {
    const std::string& n = store.name(id);
    const auto dot = n.rfind('.');
    if (dot == std::string::npos || n[dot + 1] != 'W' || store.frozen(id)) continue;
    ad::Matrix& w = store.value(id);
    const double norm = w.norm();
    if (norm > max_norm) w *= max_norm / norm;
  }
}

}  // namespace nsde::nets
