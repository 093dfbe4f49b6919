#pragma once

#include <cstdint>
#include <vector>

#include "sde/grid.hpp"
#include "sde/layout.hpp"
#include "sde/model.hpp"
#include "sde/rng.hpp"

namespace nsde::sde {

/// One tamed Euler step for a scalar state:
/// x + b dt / (1 + |b| sqrt(dt)) + sigma dw / (1 + |sigma| sqrt(dt)).
double tamed_step(double x, double b, double sigma, double dt, double dw);

/// Largest observed |tamed drift increment| / sqrt(dt) and |tamed diffusion| * sqrt(dt).
/// Both are at most one by construction.
struct TamingReport {
  double max_drift_ratio = 0.0;
  double max_diffusion_ratio = 0.0;
  std::uint64_t checks = 0;
  bool ok() const;
};

/// Gaussian increments for one chunk: rows follow BatchLayout order, each
/// entry already multiplied by sqrt(dt).
class IncrementSource {
 public:
  IncrementSource(std::uint64_t seed, std::uint32_t stream, const BatchLayout& layout);

  /// (rows x factors) increments for step k; factors is 1 or 2.
  ad::Matrix increments(const PathRange& range, std::uint32_t step, double dt, int factors) const;

  const BatchLayout& layout() const { return layout_; }

 private:
  NormalStream normals_;
  BatchLayout layout_;
};

/// Simulated paths for one chunk. s[k] and v[k] are (rows x 1) at grid index k.
struct PathChunk {
  PathRange range;
  std::vector<ad::DiffArray> s;
  std::vector<ad::DiffArray> v;
  Eigen::Index rows() const { return s.empty() ? 0 : s.front().rows(); }
};

/// Tamed Euler simulation of the model on grid indices 0..last_index. The
/// Binder decides whether the result is recorded (attached) or values only.
PathChunk simulate(const NeuralSde& model, nets::Binder& bind, const TimeGrid& grid,
                   const IncrementSource& source, const PathRange& range, std::size_t last_index,
                   TamingReport* taming = nullptr);

/// Detached copy of every path of a chunk.
PathChunk detach(const PathChunk& chunk);

/// Row-major (rows x (last+1)) value matrix of S (or V).
ad::Matrix path_matrix(const std::vector<ad::DiffArray>& series);

}  // namespace nsde::sde
