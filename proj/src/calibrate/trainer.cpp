#include "calibrate/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>

#include "market/black_scholes.hpp"
#include "market/surface.hpp"
#include "sde/rng.hpp"

namespace nsde::calibrate {

std::string to_string(BoundDirection d) {
  switch (d) {
    case BoundDirection::none: return "none";
    case BoundDirection::lower: return "lower";
    case BoundDirection::upper: return "upper";
  }
  return "none";
}

BoundDirection parse_direction(const std::string& s) {
  if (s == "none") return BoundDirection::none;
  if (s == "lower") return BoundDirection::lower;
  if (s == "upper") return BoundDirection::upper;
  throw ConfigError("bound direction must be one of none, lower, upper (got '" + s + "')");
}

std::vector<market::OptionSpec> CalibTask::instruments() const {
  std::vector<market::OptionSpec> out = vanillas;
  if (exotic) out.push_back(*exotic);
  return out;
}

std::size_t CalibTask::last_index() const {
  std::size_t last = 0;
  for (const auto& o : instruments()) last = std::max(last, grid.index_of(o.maturity));
  return last;
}

void CalibTask::validate() const {
  if (vanillas.empty() && !exotic) throw ConfigError("calibration task has no instruments");
  if (targets.size() != vanillas.size()) throw ConfigError("calibration task: one target per vanilla required");
  for (const auto& o : instruments()) {
    o.validate();
    grid.index_of(o.maturity);
  }
  if (!hedge_columns.empty() && hedge_columns.size() != instruments().size())
    throw ConfigError("calibration task: hedge column map has the wrong size");
}

namespace {

// Runs body(i) for i in [0, n) on the OpenMP team and rethrows the first failure.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  std::exception_ptr error;
  std::mutex mu;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

// Sums per-chunk gradient sinks into the store in a fixed pairwise order.
void reduce_into(ad::ParamStore& store, std::vector<std::vector<ad::Matrix>>& sinks) {
  std::size_t width = sinks.size();
  while (width > 1) {
    const std::size_t half = (width + 1) / 2;
    for (std::size_t i = 0; i + half < width; ++i) {
      auto& dst = sinks[i];
      auto& src = sinks[i + half];
      if (dst.size() < src.size()) dst.resize(src.size());
      for (std::size_t p = 0; p < src.size(); ++p) {
        if (src[p].size() == 0) continue;
        if (dst[p].size() == 0) dst[p] = std::move(src[p]);
        else dst[p] += src[p];
      }
    }
    width = half;
  }
  if (sinks.empty()) return;
  for (std::size_t p = 0; p < sinks[0].size(); ++p)
    if (sinks[0][p].size() != 0) store.grad(ad::ParamId{p}) += sinks[0][p];
}

std::vector<Moments> column_moments(const ad::Matrix& m, bool pairs) {
  const Eigen::Index cols = m.cols();
  std::vector<Moments> out(static_cast<std::size_t>(cols));
  if (pairs) {
    const Eigen::Index h = m.rows() / 2;
    for (Eigen::Index i = 0; i < h; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) out[j].add(0.5 * (m(i, j) + m(i + h, j)));
  } else {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < cols; ++j) out[j].add(m(i, j));
  }
  return out;
}

std::vector<Moments> merge_columns(const std::vector<std::vector<Moments>>& parts) {
  if (parts.empty()) return {};
  std::vector<Moments> out(parts[0].size());
  std::vector<Moments> col(parts.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    for (std::size_t c = 0; c < parts.size(); ++c) col[c] = parts[c][j];
    out[j] = merge_pairwise(col);
  }
  return out;
}

}  // namespace

Trainer::Trainer(const sde::NeuralSde& model, ad::ParamStore& theta, const hedge::HedgeNet& hedge,
                 ad::ParamStore& xi, CalibTask task, TrainConfig config)
    : model_(model), theta_(theta), hedge_(hedge), xi_(xi), task_(std::move(task)), config_(config) {
  task_.validate();
  config_.layout.validate();
  instruments_ = task_.instruments();
  if (task_.hedge_columns.empty())
    for (std::size_t j = 0; j < instruments_.size(); ++j) task_.hedge_columns.push_back(j);
  for (auto c : task_.hedge_columns)
    if (c >= hedge_.outputs()) throw ConfigError("hedge column out of range");
  if (task_.grid.horizon() > model_.horizon() * (1.0 + 1e-12))
    throw ConfigError("calibration grid extends beyond the model's last maturity");
}

Batch::Chunk Trainer::record_chunk(std::uint32_t stream, const sde::BatchLayout& layout,
                                   const sde::PathRange& range, bool record_theta, bool record_xi) const {
  Batch::Chunk c;
  c.range = range;
  if (record_theta) c.theta_tape = std::make_unique<ad::Tape>();
  if (record_xi) c.xi_tape = std::make_unique<ad::Tape>();
  nets::Binder tb(theta_, c.theta_tape.get());
  const sde::IncrementSource source(config_.seed, stream, layout);
  const sde::PathChunk paths = sde::simulate(model_, tb, task_.grid, source, range, task_.last_index());
  c.payoff = market::payoffs(instruments_, paths, task_.grid, model_.rate());
  if (config_.use_hedge) {
    nets::Binder xb(xi_, c.xi_tape.get());
    c.integral = hedge::stoch_integral(hedge_, xb, sde::detach(paths), task_.grid, model_.rate(), instruments_,
                                       task_.hedge_columns);
  } else {
    c.integral = ad::DiffArray::filled(c.payoff.rows(), static_cast<Eigen::Index>(instruments_.size()), 0.0);
  }
  return c;
}

Batch Trainer::evaluate(std::uint32_t stream, const sde::BatchLayout& layout, bool record_theta,
                        bool record_xi) const {
  layout.validate();
  Batch b;
  b.stream = stream;
  b.layout = layout;
  const auto ranges = layout.chunks();
  b.chunks.resize(ranges.size());
  std::vector<std::vector<Moments>> pay(ranges.size()), ctl(ranges.size()), res(ranges.size()),
      raw(ranges.size());
  const std::size_t budget = config_.memory_budget_mb * std::size_t{1024} * 1024;
  std::atomic<std::size_t> used{0};
  record_xi = record_xi && config_.use_hedge;
  parallel_for(ranges.size(), [&](std::size_t i) {
    Batch::Chunk c = record_chunk(stream, layout, ranges[i], record_theta, record_xi);
    const ad::Matrix& p = c.payoff.values();
    const ad::Matrix r = p - c.integral.values();
    pay[i] = column_moments(p, layout.antithetic);
    ctl[i] = column_moments(r, layout.antithetic);
    res[i] = column_moments(r, false);
    raw[i] = column_moments(p, false);
    std::size_t bytes = (c.theta_tape ? c.theta_tape->bytes() : 0) + (c.xi_tape ? c.xi_tape->bytes() : 0);
    if (used.fetch_add(bytes) + bytes > budget) {
      // Over budget: keep values only; the backward pass re-simulates this chunk.
      c.theta_tape.reset();
      c.xi_tape.reset();
      c.payoff = ad::detach(c.payoff);
      c.integral = ad::detach(c.integral);
      used.fetch_sub(bytes);
    }
    b.chunks[i] = std::move(c);
  });
  b.stats.payoff = merge_columns(pay);
  b.stats.controlled = merge_columns(ctl);
  b.stats.residual = merge_columns(res);
  b.stats.raw = merge_columns(raw);
  b.stats.paths = layout.paths;
  return b;
}

void Trainer::backprop_theta(Batch& batch, const ad::Matrix& weights) const {
  if (weights.rows() != 1 || weights.cols() != static_cast<Eigen::Index>(columns()))
    throw ShapeError("backprop_theta: one weight per column required");
  std::vector<std::vector<ad::Matrix>> sinks(batch.chunks.size());
  const ad::DiffArray w = ad::DiffArray::constant(weights);
  parallel_for(batch.chunks.size(), [&](std::size_t i) {
    Batch::Chunk& c = batch.chunks[i];
    if (!c.theta_tape) {
      Batch::Chunk fresh = record_chunk(batch.stream, batch.layout, c.range, true, false);
      c.theta_tape = std::move(fresh.theta_tape);
      c.payoff = fresh.payoff;
    }
    if (c.payoff.attached()) {
      const ad::DiffArray scalar = ad::sum_cols(ad::sum_rows(ad::mul(c.payoff, w)));
      c.theta_tape->backward(scalar, &sinks[i], true);
    }
    c.theta_tape.reset();
    c.payoff = ad::detach(c.payoff);
  });
  reduce_into(theta_, sinks);
}

void Trainer::backprop_xi(Batch& batch, const std::vector<std::size_t>& cols) const {
  if (!config_.use_hedge) return;
  const double n = static_cast<double>(batch.stats.paths);
  ad::Matrix mean_res(1, static_cast<Eigen::Index>(columns()));
  ad::Matrix active = ad::Matrix::Zero(1, static_cast<Eigen::Index>(columns()));
  for (std::size_t j = 0; j < columns(); ++j) mean_res(0, j) = batch.stats.residual[j].mean;
  for (auto j : cols) active(0, static_cast<Eigen::Index>(j)) = 1.0;
  std::vector<std::vector<ad::Matrix>> sinks(batch.chunks.size());
  parallel_for(batch.chunks.size(), [&](std::size_t i) {
    Batch::Chunk& c = batch.chunks[i];
    if (!c.xi_tape) {
      Batch::Chunk fresh = record_chunk(batch.stream, batch.layout, c.range, false, true);
      c.xi_tape = std::move(fresh.xi_tape);
      c.integral = fresh.integral;
    }
    if (c.integral.attached()) {
      // Var(P - I) with P fixed: d/dI_i = -2 (R_i - mean R) / (n - 1)
      const ad::Matrix r = c.payoff.values() - c.integral.values();
      ad::Matrix g = ((r.rowwise() - mean_res.row(0)).array().rowwise() * active.row(0).array()).matrix();
      g *= -2.0 / (n - 1.0);
      const ad::DiffArray scalar =
          ad::sum_cols(ad::sum_rows(ad::mul(c.integral, ad::DiffArray::constant(std::move(g)))));
      c.xi_tape->backward(scalar, &sinks[i], true);
    }
    c.xi_tape.reset();
    c.integral = ad::detach(c.integral);
  });
  reduce_into(xi_, sinks);
}

std::vector<double> Trainer::vanilla_means(const BatchStats& s) const {
  std::vector<double> out;
  for (std::size_t j = 0; j < task_.vanillas.size(); ++j) out.push_back(s.controlled[j].mean);
  return out;
}

double Trainer::mse(const BatchStats& s) const {
  if (task_.vanillas.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t j = 0; j < task_.vanillas.size(); ++j) {
    const double e = s.controlled[j].mean - task_.targets[j];
    acc += e * e;
  }
  return acc / static_cast<double>(task_.vanillas.size());
}

ad::Matrix Trainer::mse_weights(const BatchStats& s) const {
  ad::Matrix w = ad::Matrix::Zero(1, static_cast<Eigen::Index>(columns()));
  const double nv = static_cast<double>(task_.vanillas.size());
  for (std::size_t j = 0; j < task_.vanillas.size(); ++j)
    w(0, static_cast<Eigen::Index>(j)) = 2.0 * (s.controlled[j].mean - task_.targets[j]) / nv;
  return w;
}

// ---------------------------------------------------------------------------

std::vector<EpochRecord> train(const sde::NeuralSde& model, ad::ParamStore& theta, const hedge::HedgeNet& hedge,
                               ad::ParamStore& xi, const CalibTask& task, const TrainConfig& config,
                               AugLagState* auglag, const EpochCallback& on_epoch) {
  Trainer trainer(model, theta, hedge, xi, task, config);
  const bool bound = config.direction != BoundDirection::none;
  if (bound && !task.exotic) throw ConfigError("price bounds need an exotic instrument");
  AugLagState local{config.lambda0, config.c0, 0};
  AugLagState& al = auglag ? *auglag : local;
  const double sign = config.direction == BoundDirection::upper ? -1.0 : 1.0;

  AdamState adam_theta(theta, AdamConfig{config.lr_theta});
  AdamState adam_xi(xi, AdamConfig{config.lr_xi});
  std::vector<std::size_t> var_columns(trainer.columns());
  for (std::size_t j = 0; j < var_columns.size(); ++j) var_columns[j] = j;

  const std::size_t segments = model.segment_count();
  std::vector<bool> frozen;
  for (std::size_t i = 0; i < theta.size(); ++i) frozen.push_back(theta.frozen(ad::ParamId{i}));
  std::vector<EpochRecord> history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto stream = static_cast<std::uint32_t>(2 * epoch);
    const double n = static_cast<double>(config.layout.paths);
    Batch batch = trainer.evaluate(stream, config.layout, !config.randomized_maturity, true);
    const double mse = trainer.mse(batch.stats);
    if (!std::isfinite(mse)) throw NumericError("calibration diverged: MSE is not finite at epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mse = mse;
    rec.exotic_price = task.exotic ? batch.stats.controlled.back().mean : 0.0;
    rec.lambda = bound ? al.lambda : 0.0;
    rec.c = bound ? al.c : 0.0;

    // theta phase: d/dtheta of [sign f] + lambda MSE + c MSE^2 (bounds) or MSE.
    ad::Matrix w = trainer.mse_weights(batch.stats);
    if (bound) {
      w *= al.lambda + 2.0 * al.c * mse;
      w(0, w.cols() - 1) = sign;
    }
    w /= n;
    theta.zero_grad();
    if (config.randomized_maturity) {
      // Derivatives through one uniformly drawn maturity segment, scaled by
      // the segment count, on an independent batch.
      const auto bits = sde::philox4x32_10({static_cast<std::uint32_t>(epoch), 0, 0, 0xa5a5a5a5u},
                                           {static_cast<std::uint32_t>(config.seed),
                                            static_cast<std::uint32_t>(config.seed >> 32)});
      const double u01 = sde::uniform_open(bits[0], bits[1]);
      const std::size_t u = std::min(segments - 1, static_cast<std::size_t>(u01 * static_cast<double>(segments)));
      for (std::size_t s = 0; s < segments; ++s)
        if (s != u) model.set_segment_frozen(theta, s, true);
      Batch second = trainer.evaluate(stream + 1, config.layout, true, false);
      trainer.backprop_theta(second, w);
      for (std::size_t i = 0; i < frozen.size(); ++i) theta.set_frozen(ad::ParamId{i}, frozen[i]);
      for (auto id : model.segment_params(u)) theta.scale_grad(id, static_cast<double>(segments));
    } else {
      trainer.backprop_theta(batch, w);
    }
    adam_step(theta, adam_theta, scheduled_lr(config.lr_theta, epoch, config.lr_halving));
    if (config.clip_max_norm > 0.0) {
      const auto ids = model.params();
      nets::clip_weights(theta, ids, config.clip_max_norm);
    }

    // xi phase: sample variance of the controlled payoffs, theta fixed.
    if (config.use_hedge) {
      xi.zero_grad();
      trainer.backprop_xi(batch, var_columns);
      adam_step(xi, adam_xi, scheduled_lr(config.lr_xi, epoch, config.lr_halving));
    }

    if (bound && (epoch + 1) % config.auglag_every == 0) al = auglag_update(al, mse);
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

CalibReport evaluate_report(const sde::NeuralSde& model, ad::ParamStore& theta, const hedge::HedgeNet& hedge,
                            ad::ParamStore& xi, const CalibTask& task, const sde::BatchLayout& layout,
                            std::uint64_t seed, bool use_hedge) {
  TrainConfig cfg;
  cfg.layout = layout;
  cfg.seed = seed;
  cfg.use_hedge = use_hedge;
  Trainer trainer(model, theta, hedge, xi, task, cfg);
  const Batch batch = trainer.evaluate(0xfffffff0u, layout, false, false);
  CalibReport rep;
  rep.seed = seed;
  rep.eval_paths = layout.paths;
  const auto instruments = task.instruments();
  auto result = [&](std::size_t j) {
    InstrumentResult r;
    r.spec = instruments[j];
    r.price = {batch.stats.controlled[j].mean, batch.stats.controlled[j].stderr_of_mean()};
    r.raw_price = {batch.stats.payoff[j].mean, batch.stats.payoff[j].stderr_of_mean()};
    r.variance = batch.stats.residual[j].variance();
    r.raw_variance = batch.stats.raw[j].variance();
    return r;
  };
  double acc = 0.0;
  for (std::size_t j = 0; j < task.vanillas.size(); ++j) {
    InstrumentResult r = result(j);
    r.target = task.targets[j];
    const auto& o = r.spec;
    if (o.kind == market::OptionKind::european_call) {
      auto m = market::implied_vol(r.price.mean, model.s0(), o.strike, model.rate(), o.maturity);
      auto t = market::implied_vol(r.target, model.s0(), o.strike, model.rate(), o.maturity);
      r.model_iv = m.vol;
      r.target_iv = t.vol;
    }
    const double e = r.price.mean - r.target;
    acc += e * e;
    rep.instruments.push_back(r);
  }
  rep.final_mse = task.vanillas.empty() ? 0.0 : acc / static_cast<double>(task.vanillas.size());
  if (task.exotic) {
    InstrumentResult r = result(instruments.size() - 1);
    rep.exotic = r;
  }
  return rep;
}

}  // namespace nsde::calibrate
