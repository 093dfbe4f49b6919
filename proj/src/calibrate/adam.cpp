#include "calibrate/adam.hpp"

#include <cmath>

namespace nsde::calibrate {

AdamState::AdamState(const ad::ParamStore& store, const AdamConfig& c) : config(c) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ad::Matrix& p = store.value(ad::ParamId{i});
    m.push_back(ad::Matrix::Zero(p.rows(), p.cols()));
    v.push_back(ad::Matrix::Zero(p.rows(), p.cols()));
  }
}

void adam_step(ad::ParamStore& store, AdamState& s, double lr) {
  if (s.m.size() != store.size()) throw ShapeError("adam_step: state does not match the parameter store");
  for (std::size_t i = 0; i < store.size(); ++i)
    if (!store.grad(ad::ParamId{i}).allFinite())
      throw NumericError("adam_step: non-finite gradient for '" + store.name(ad::ParamId{i}) + "'");
  ++s.step;
  const double b1 = s.config.beta1;
  const double b2 = s.config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ad::ParamId id{i};
    if (store.frozen(id)) continue;
    const ad::Matrix& g = store.grad(id);
    s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
    s.v[i] = b2 * s.v[i] + (1.0 - b2) * g.cwiseProduct(g);
    store.value(id).array() -=
        lr * (s.m[i].array() / c1) / ((s.v[i].array() / c2).sqrt() + s.config.eps);
  }
}

double scheduled_lr(double lr0, int epoch, int halving) {
  if (halving <= 0) return lr0;
  return lr0 * std::pow(0.5, epoch / halving);
}

}  // namespace nsde::calibrate
