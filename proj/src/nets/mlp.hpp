#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autodiff/ops.hpp"

namespace nsde::nets {

enum class OutputTransform { identity, softplus };

std::string to_string(OutputTransform t);
OutputTransform parse_output_transform(const std::string& s);

/// Parameter count of a fully connected net: sum over layers of l_{k-1} l_k + l_k.
std::size_t mlp_parameter_count(std::span<const int> sizes);

/// Resolves parameter ids to arrays for one evaluation. With a tape, trainable
/// parameters become attached leaves (one per id, cached); otherwise, and for
/// frozen parameters, they are detached constants.
class Binder {
 public:
  Binder(ad::ParamStore& store, ad::Tape* tape);

  ad::DiffArray operator()(ad::ParamId id);

  ad::Tape* tape() const { return tape_; }
  ad::ParamStore& store() const { return *store_; }

 private:
  ad::ParamStore* store_;
  ad::Tape* tape_;
  std::vector<ad::DiffArray> cache_;
};

struct MlpInit {
  /// Multiplies the He-initialised weights of the last layer.
  double final_weight_scale = 1.0;
  /// Initial value of every output bias (zero when absent).
  std::optional<double> output_bias;
};

/// relu hidden layers, affine output layer, optional softplus on the output.
class Mlp {
 public:
  Mlp(ad::ParamStore& store, const std::string& prefix, std::vector<int> sizes,
      OutputTransform output, std::uint64_t seed, const MlpInit& init = {});

  ad::DiffArray forward(Binder& bind, const ad::DiffArray& x) const;

  const std::vector<int>& sizes() const { return sizes_; }
  OutputTransform output_transform() const { return output_; }
  std::vector<ad::ParamId> params() const;
  std::size_t parameter_count() const { return mlp_parameter_count(sizes_); }

 private:
  std::vector<int> sizes_;
  OutputTransform output_;
  std::vector<ad::ParamId> weights_;
  std::vector<ad::ParamId> biases_;
};

/// One Mlp per maturity interval [T_{i-1}, T_i); the last interval is closed.
/// Inputs are (t / T_N, state...).
class SegmentedNet {
 public:
  SegmentedNet(ad::ParamStore& store, const std::string& prefix, std::vector<double> maturities,
               std::vector<int> sizes, OutputTransform output, std::uint64_t seed,
               const MlpInit& init = {});

  std::size_t segment_at(double t) const;
  std::size_t segment_count() const { return segments_.size(); }
  const Mlp& segment(std::size_t i) const { return segments_.at(i); }
  const std::vector<double>& maturities() const { return maturities_; }
  double horizon() const { return maturities_.back(); }

  /// Evaluates the segment containing t on the batch `state` (n x d).
  ad::DiffArray forward(Binder& bind, double t, const ad::DiffArray& state) const;

  void set_frozen(ad::ParamStore& store, std::size_t segment, bool frozen) const;
  std::vector<ad::ParamId> params() const;
  std::vector<ad::ParamId> segment_params(std::size_t segment) const;

 private:
  std::vector<double> maturities_;
  std::vector<Mlp> segments_;
};

/// Rescales every weight matrix (not biases) whose Frobenius norm exceeds max_norm.
void clip_weights(ad::ParamStore& store, std::span<const ad::ParamId> ids, double max_norm);

/// Stable 64-bit hash used to derive per-network seeds from names.
std::uint64_t name_hash(const std::string& s);

}  // namespace nsde::nets
