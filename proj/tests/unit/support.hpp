#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "autodiff/ops.hpp"
#include "autodiff/tape.hpp"

namespace nsde::testing {

inline ad::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                                double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ad::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline ad::DiffArray leaf(ad::ParamStore& store, ad::ParamId id, ad::Tape* tape) {
  return tape ? tape->param(store, id) : ad::DiffArray::constant(store.value(id));
}

/// Largest per-tensor relative error ||analytic - fd|| / ||fd|| of the
/// gradient of `f` against central differences with step h.
inline double fd_relative_error(ad::ParamStore& store, const std::function<ad::DiffArray(ad::Tape*)>& f,
                                double h = 1e-5) {
  store.zero_grad();
  {
    ad::Tape tape;
    tape.backward(f(&tape));
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < store.size(); ++p) {
    const ad::ParamId id{p};
    ad::Matrix fd(store.value(id).rows(), store.value(id).cols());
    for (Eigen::Index i = 0; i < fd.size(); ++i) {
      double& x = store.value(id).data()[i];
      const double x0 = x;
      x = x0 + h;
      const double up = f(nullptr).item();
      x = x0 - h;
      const double down = f(nullptr).item();
      x = x0;
      fd.data()[i] = (up - down) / (2.0 * h);
    }
    const double denom = std::max(fd.norm(), 1e-12);
    worst = std::max(worst, (store.grad(id) - fd).norm() / denom);
  }
  return worst;
}

}  // namespace nsde::testing
