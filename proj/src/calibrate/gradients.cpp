#include "calibrate/gradients.hpp"

#include <cmath>

namespace nsde::calibrate {

namespace {

std::vector<ad::Matrix> snapshot(const ad::ParamStore& store) {
  std::vector<ad::Matrix> out(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out[i] = store.grad(ad::ParamId{i});
  return out;
}

struct FrozenSnapshot {
  ad::ParamStore& store;
  std::vector<bool> saved;
  explicit FrozenSnapshot(ad::ParamStore& s) : store(s) {
    for (std::size_t i = 0; i < s.size(); ++i) saved.push_back(s.frozen(ad::ParamId{i}));
  }
  ~FrozenSnapshot() {
    for (std::size_t i = 0; i < saved.size(); ++i) store.set_frozen(ad::ParamId{i}, saved[i]);
  }
};

}  // namespace

std::vector<ad::Matrix> mse_gradient(const Trainer& trainer, const sde::NeuralSde& model, ad::ParamStore& theta,
                                     GradientStreams streams, std::optional<std::size_t> segment) {
  const std::size_t segments = model.segment_count();
  if (segment && *segment >= segments) throw ConfigError("randomized gradient: segment index out of range");
  const auto& layout = trainer.config().layout;
  const Batch priced = trainer.evaluate(streams.weights, layout, false, false);
  ad::Matrix w = trainer.mse_weights(priced.stats) / static_cast<double>(layout.paths);

  FrozenSnapshot restore(theta);
  if (segment)
    for (std::size_t s = 0; s < segments; ++s) model.set_segment_frozen(theta, s, s != *segment);
  theta.zero_grad();
  Batch b = trainer.evaluate(streams.derivatives, layout, true, false);
  trainer.backprop_theta(b, w);
  if (segment)
    for (auto id : model.segment_params(*segment)) theta.scale_grad(id, static_cast<double>(segments));
  return snapshot(theta);
}

BiasReport bias_diagnostic(const sde::NeuralSde& model, ad::ParamStore& theta, const hedge::HedgeNet& hedge,
                           ad::ParamStore& xi, const CalibTask& task, const BiasConfig& config,
                           std::uint64_t seed, bool use_hedge) {
  if (task.instruments().size() != 1) throw ConfigError("bias diagnostic needs exactly one instrument");
  if (config.batch_paths < 2 || config.batches < 2) throw ConfigError("bias diagnostic needs at least two batches of two paths");
  TrainConfig tc;
  tc.seed = seed;
  tc.use_hedge = use_hedge;
  tc.layout = sde::BatchLayout{config.batch_paths, false, 512};
  Trainer trainer(model, theta, hedge, xi, task, tc);
  const double n = static_cast<double>(config.batch_paths);
  const ad::Matrix unit = ad::Matrix::Constant(1, 1, 1.0 / n);
  const auto ids = model.params();

  auto flat = [&] {
    std::vector<double> g;
    for (auto id : ids) {
      const ad::Matrix& m = theta.grad(id);
      g.insert(g.end(), m.data(), m.data() + m.size());
    }
    return g;
  };

  // Per batch: mean of Phi_cv and of dPhi.
  std::vector<Moments> dphi, dh;
  Moments phi_path;
  for (std::size_t m = 0; m < config.batches; ++m) {
    theta.zero_grad();
    Batch b = trainer.evaluate(static_cast<std::uint32_t>(m), tc.layout, true, false);
    trainer.backprop_theta(b, unit);
    const double mean = b.stats.controlled[0].mean;
    phi_path = Moments::merge(phi_path, b.stats.controlled[0]);
    const auto g = flat();
    if (dphi.empty()) {
      dphi.resize(g.size());
      dh.resize(g.size());
    }
    for (std::size_t j = 0; j < g.size(); ++j) {
      dphi[j].add(g[j]);
      dh[j].add(2.0 * (mean - config.target) * g[j]);
    }
  }

  // Reference gradient on a separate stream range.
  TrainConfig rc = tc;
  rc.layout = sde::BatchLayout{config.reference_paths, false, 512};
  Trainer reference(model, theta, hedge, xi, task, rc);
  theta.zero_grad();
  Batch rb = reference.evaluate(0x80000000u, rc.layout, true, false);
  const double ref_mean = rb.stats.controlled[0].mean;
  const double ref_se = rb.stats.controlled[0].stderr_of_mean();
  reference.backprop_theta(rb, ad::Matrix::Constant(1, 1, 1.0 / static_cast<double>(config.reference_paths)));
  const auto ref_g = flat();

  BiasReport rep;
  rep.payoff_sd = std::sqrt(phi_path.variance());
  const double m_count = static_cast<double>(config.batches);
  const double ref_n = static_cast<double>(config.reference_paths);
  for (std::size_t j = 0; j < ref_g.size(); ++j) {
    BiasComponent c;
    const double sd_dphi = std::sqrt(dphi[j].variance() * n);
    const double ref_dh = 2.0 * (ref_mean - config.target) * ref_g[j];
    const double ref_g_se = sd_dphi / std::sqrt(ref_n);
    const double ref_dh_se = 2.0 * std::hypot(ref_g[j] * ref_se, (ref_mean - config.target) * ref_g_se);
    c.bias = std::abs(dh[j].mean - ref_dh);
    c.bound = 2.0 / n * rep.payoff_sd * sd_dphi;
    c.std_error = std::hypot(std::sqrt(dh[j].variance() / m_count), ref_dh_se);
    const double limit = c.bound + 3.0 * c.std_error;
    if (c.bias > limit) ++rep.violations;
    if (limit > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, c.bias / limit);
    else if (c.bias > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, HUGE_VAL);
    rep.components.push_back(c);
  }
  theta.zero_grad();
  return rep;
}

std::vector<std::vector<EpochRecord>> incremental_multi_maturity(const sde::NeuralSde& model, ad::ParamStore& theta,
                                                                 const hedge::HedgeNet& hedge, ad::ParamStore& xi,
                                                                 const CalibTask& task, const TrainConfig& config,
                                                                 const EpochCallback& on_epoch) {
  if (config.direction != BoundDirection::none)
    throw ConfigError("incremental training supports unconstrained calibration only");
  if (config.randomized_maturity) throw ConfigError("incremental training already trains one segment at a time");
  if (task.exotic) throw ConfigError("incremental training takes vanilla instruments only");
  task.validate();
  if (task.vanillas.size() != hedge.outputs()) throw ConfigError("hedge needs one output per vanilla");

  FrozenSnapshot restore(theta);
  std::vector<std::vector<EpochRecord>> out;
  const double spy = static_cast<double>(task.grid.steps()) / task.grid.horizon();
  for (std::size_t i = 0; i < model.segment_count(); ++i) {
    const double t = model.maturities()[i];
    CalibTask stage;
    stage.grid = sde::TimeGrid::uniform(t, static_cast<int>(std::lround(spy)));
    for (std::size_t j = 0; j < task.vanillas.size(); ++j) {
      if (std::abs(task.vanillas[j].maturity - t) > 1e-12) continue;
      stage.vanillas.push_back(task.vanillas[j]);
      stage.targets.push_back(task.targets[j]);
      stage.hedge_columns.push_back(j);
    }
    if (stage.vanillas.empty()) throw ConfigError("no instruments at maturity " + std::to_string(t));
    for (std::size_t s = 0; s < model.segment_count(); ++s) model.set_segment_frozen(theta, s, s != i);
    out.push_back(train(model, theta, hedge, xi, stage, config, nullptr, on_epoch));
  }
  return out;
}

}  // namespace nsde::calibrate
