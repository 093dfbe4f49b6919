#include "sde/simulate.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace nsde::sde {

double tamed_step(double x, double b, double sigma, double dt, double dw) {
  const double sq = std::sqrt(dt);
  return x + b * dt / (1.0 + std::abs(b) * sq) + sigma * dw / (1.0 + std::abs(sigma) * sq);
}

bool TamingReport::ok() const {
  constexpr double slack = 1.0 + 8.0 * std::numeric_limits<double>::epsilon();
  return max_drift_ratio <= slack && max_diffusion_ratio <= slack;
}

IncrementSource::IncrementSource(std::uint64_t seed, std::uint32_t stream, const BatchLayout& layout)
    : normals_(seed, stream), layout_(layout) {
  layout_.validate();
}

ad::Matrix IncrementSource::increments(const PathRange& range, std::uint32_t step, double dt,
                                       int factors) const {
  const auto n = static_cast<Eigen::Index>(range.size());
  const double sq = std::sqrt(dt);
  ad::Matrix out(layout_.rows(range), factors);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto z = normals_.pair(range.begin + static_cast<std::uint64_t>(i), step);
    for (int f = 0; f < factors; ++f) out(i, f) = sq * z[f];
  }
  if (layout_.antithetic) out.bottomRows(n) = -out.topRows(n);
  return out;
}

namespace {

using ad::DiffArray;

// b dt / (1 + |b| sqrt(dt)) given the (possibly vector) norm of b.
DiffArray tamed_drift(const DiffArray& b, const DiffArray& norm, double dt) {
  return ad::div(ad::scale(b, dt), ad::add_scalar(ad::scale(norm, std::sqrt(dt)), 1.0));
}

DiffArray tame_factor(const DiffArray& norm, double dt) {
  return ad::add_scalar(ad::scale(norm, std::sqrt(dt)), 1.0);
}

void record_taming(TamingReport* rep, const ad::Matrix& drift_norm, const ad::Matrix& diff_norm, double dt) {
  if (!rep) return;
  const double sq = std::sqrt(dt);
  const auto d = (drift_norm.array() * dt / (1.0 + drift_norm.array() * sq)) / sq;
  const auto s = (diff_norm.array() / (1.0 + diff_norm.array() * sq)) * sq;
  rep->max_drift_ratio = std::max(rep->max_drift_ratio, d.maxCoeff());
  rep->max_diffusion_ratio = std::max(rep->max_diffusion_ratio, s.maxCoeff());
  rep->checks += static_cast<std::uint64_t>(drift_norm.size());
}

// S' = S + rS dt / (1 + |rS| sqrt(dt)) + vol S dw / (1 + |vol S| sqrt(dt)) as one node.
DiffArray tamed_lv_step(const DiffArray& s, const DiffArray& vol, const ad::Matrix& dw, double r, double dt,
                        TamingReport* taming) {
  const double q = std::sqrt(dt);
  auto sv = s.shared_values();
  auto vv = vol.shared_values();
  const auto S = sv->array();
  const auto V = vv->array();
  const ad::Matrix b_norm = (r * S).abs().matrix();
  const ad::Matrix s_norm = (V * S).abs().matrix();
  record_taming(taming, b_norm, s_norm, dt);
  auto dwp = std::make_shared<const ad::Matrix>(dw);
  auto out = std::make_shared<ad::Matrix>(
      (S + r * S * dt / (1.0 + b_norm.array() * q) + V * S * dw.array() / (1.0 + s_norm.array() * q)).matrix());
  const DiffArray in[] = {s, vol};
  ad::Tape* tape = s.attached() ? s.tape() : vol.tape();
  if (tape == nullptr) {
    if (!ad::all_finite(*out)) throw NumericError("non-finite output in op 'tamed_lv_step'");
    return DiffArray::constant(std::shared_ptr<const ad::Matrix>(std::move(out)));
  }
  return tape->record(
      std::move(out), in,
      [sv, vv, dwp, r, dt, q](const ad::Matrix& g, std::span<ad::Matrix* const> adj) {
        const auto S = sv->array();
        const auto V = vv->array();
        const auto fd = 1.0 + (r * S).abs() * q;
        const auto fs = 1.0 + (V * S).abs() * q;
        // d(drift term)/d(rS) = dt / fd^2, d(diffusion term)/d(vol S) = dw / fs^2
        const ad::Matrix dsig = (g.array() * dwp->array() / fs.square()).matrix();
        if (adj[0]) adj[0]->array() += g.array() * (1.0 + r * dt / fd.square()) + dsig.array() * V;
        if (adj[1]) adj[1]->array() += dsig.array() * S;
      },
      "tamed_lv_step");
}

}  // namespace

PathChunk simulate(const NeuralSde& model, nets::Binder& bind, const TimeGrid& grid,
                   const IncrementSource& source, const PathRange& range, std::size_t last_index,
                   TamingReport* taming) {
  if (last_index > grid.steps()) throw ConfigError("simulate: last index beyond grid");
  if (grid.horizon() > model.horizon() * (1.0 + 1e-12))
    throw ConfigError("simulate: grid extends beyond the model's last maturity");
  const Eigen::Index rows = static_cast<Eigen::Index>(source.layout().rows(range));
  const double r = model.rate();
  const bool lsv = model.kind() == ModelKind::lsv;

  PathChunk out;
  out.range = range;
  out.s.reserve(last_index + 1);
  out.s.push_back(DiffArray::filled(rows, 1, model.s0()));

  DiffArray rho, rho_c;
  if (lsv) {
    rho = ad::tanh(bind(model.rho_hat()));
    rho_c = ad::sqrt(ad::add_scalar(ad::scale(ad::mul(rho, rho), -1.0), 1.0));
    out.v.reserve(last_index + 1);
    out.v.push_back(ad::add(DiffArray::filled(rows, 1, 0.0), bind(model.v0())));
  }

  for (std::size_t k = 0; k < last_index; ++k) {
    const double t = grid.time(k);
    const double dt = grid.dt(k);
    const DiffArray& s = out.s.back();
    const ad::Matrix dw = source.increments(range, static_cast<std::uint32_t>(k), dt, lsv ? 2 : 1);
    if (!lsv) {
      const DiffArray vol = model.sigma_s().forward(bind, t, s);
      out.s.push_back(tamed_lv_step(s, vol, dw, r, dt, taming));
      continue;
    }

    const DiffArray& v = out.v.back();
    const DiffArray b_s = ad::scale(s, r);
    const DiffArray sv_in[] = {s, v};
    const DiffArray state = ad::concat_cols(sv_in);
    const DiffArray sig_s = ad::mul(model.sigma_s().forward(bind, t, state), s);
    const DiffArray b_v = model.drift_v().forward(bind, t, v);
    const DiffArray sig_v = model.sigma_v().forward(bind, t, v);
    const DiffArray b_norm = ad::hypot(b_s, b_v);
    const DiffArray s_norm = ad::hypot(sig_s, sig_v);
    record_taming(taming, b_norm.values(), s_norm.values(), dt);
    const DiffArray factor = tame_factor(s_norm, dt);
    const DiffArray dwv = DiffArray::constant(ad::Matrix(dw.col(0)));
    const DiffArray dz = DiffArray::constant(ad::Matrix(dw.col(1)));
    const DiffArray dws = ad::add(ad::mul(rho, dwv), ad::mul(rho_c, dz));
    out.s.push_back(ad::add(ad::add(s, tamed_drift(b_s, b_norm, dt)), ad::mul(ad::div(sig_s, factor), dws)));
    out.v.push_back(ad::add(ad::add(v, tamed_drift(b_v, b_norm, dt)), ad::mul(ad::div(sig_v, factor), dwv)));
  }
  return out;
}

PathChunk detach(const PathChunk& chunk) {
  PathChunk out;
  out.range = chunk.range;
  for (const auto& x : chunk.s) out.s.push_back(ad::detach(x));
  for (const auto& x : chunk.v) out.v.push_back(ad::detach(x));
  return out;
}

ad::Matrix path_matrix(const std::vector<ad::DiffArray>& series) {
  if (series.empty()) return {};
  ad::Matrix m(series.front().rows(), static_cast<Eigen::Index>(series.size()));
  for (std::size_t k = 0; k < series.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = series[k].values();
  return m;
}

}  // namespace nsde::sde
