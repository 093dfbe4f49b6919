#include "market/heston.hpp"

#include <algorithm>
#include <cmath>

#include "common/errors.hpp"
#include "sde/grid.hpp"
#include "sde/rng.hpp"

namespace nsde::market {

void HestonParams::validate() const {
  if (!(x0 > 0.0)) throw ConfigError("heston: x0 must be positive");
  if (!(kappa >= 0.0 && mu >= 0.0 && eta >= 0.0 && v0 >= 0.0))
    throw ConfigError("heston: kappa, mu, eta and v0 must be nonnegative");
  if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("heston: rho must lie in (-1, 1)");
  if (!std::isfinite(rate)) throw ConfigError("heston: rate must be finite");
}

namespace {

// Per-path quantities collected at each maturity.
struct Observer {
  std::vector<std::size_t> index;  // grid index per maturity
  std::vector<double> discount;
};

// Simulates one path (sign = +-1 for the antithetic mirror) and calls
// visit(m, S_T, running max) at each maturity index.
template <class Visit>
void heston_path(const HestonParams& p, const sde::TimeGrid& grid, const sde::NormalStream& normals,
                 std::uint64_t base, double sign, const Observer& obs, Visit&& visit) {
  double s = p.x0;
  double v = p.v0;
  double smax = s;
  const double rho_c = std::sqrt(1.0 - p.rho * p.rho);
  std::size_t next = 0;
  while (next < obs.index.size() && obs.index[next] == 0) visit(next++, s, smax);
  for (std::size_t k = 0; k < grid.steps() && next < obs.index.size(); ++k) {
    const double dt = grid.dt(k);
    const double sq = std::sqrt(dt);
    const auto z = normals.pair(base, static_cast<std::uint32_t>(k));
    const double dwv = sign * sq * z[0];
    const double dws = p.rho * dwv + rho_c * sign * sq * z[1];
    const double vp = std::sqrt(std::max(v, 0.0));
    const double bs = p.rate * s;
    const double bv = p.kappa * (p.mu - v);
    const double ss = vp * s;
    const double sv = p.eta * vp;
    const double bn = std::hypot(bs, bv);
    const double sn = std::hypot(ss, sv);
    const double df = 1.0 + bn * sq;
    const double sf = 1.0 + sn * sq;
    s += bs * dt / df + ss / sf * dws;
    v += bv * dt / df + sv / sf * dwv;
    smax = std::max(smax, s);
    while (next < obs.index.size() && obs.index[next] == k + 1) visit(next++, s, smax);
  }
}

struct Setup {
  sde::TimeGrid grid;
  Observer obs;
};

Setup make_setup(const HestonParams& p, const std::vector<double>& maturities, const HestonRun& run) {
  p.validate();
  if (maturities.empty()) throw ConfigError("heston: no maturities");
  if (!std::is_sorted(maturities.begin(), maturities.end()))
    throw ConfigError("heston: maturities must be increasing");
  Setup s{sde::TimeGrid::uniform(maturities.back(), run.steps_per_year), {}};
  for (double t : maturities) {
    s.obs.index.push_back(s.grid.index_of(t));
    s.obs.discount.push_back(std::exp(-p.rate * t));
  }
  return s;
}

sde::BatchLayout layout_of(const HestonRun& run) {
  sde::BatchLayout l{run.paths, run.antithetic, run.chunk_paths};
  l.validate();
  return l;
}

// Runs every chunk, giving each one an accumulator of `width` Moments that
// receives one sample per base path (the antithetic pair average).
template <class PerPair>
std::vector<Moments> run_chunks(const sde::BatchLayout& layout, std::size_t width, PerPair&& per_pair) {
  const auto chunks = layout.chunks();
  std::vector<std::vector<Moments>> parts(chunks.size(), std::vector<Moments>(width));
#pragma omp parallel for schedule(dynamic)
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    std::vector<double> sample(width);
    for (std::uint64_t b = chunks[c].begin; b < chunks[c].end; ++b) {
      per_pair(b, sample);
      for (std::size_t j = 0; j < width; ++j) parts[c][j].add(sample[j]);
    }
  }
  std::vector<Moments> out(width);
  std::vector<Moments> column(chunks.size());
  for (std::size_t j = 0; j < width; ++j) {
    for (std::size_t c = 0; c < chunks.size(); ++c) column[c] = parts[c][j];
    out[j] = merge_pairwise(column);
  }
  return out;
}

}  // namespace

HestonSurface heston_mc_surface(const HestonParams& p, const std::vector<double>& maturities,
                                const std::vector<double>& strikes, const HestonRun& run) {
  if (strikes.empty()) throw ConfigError("heston: no strikes");
  const Setup setup = make_setup(p, maturities, run);
  const auto layout = layout_of(run);
  const sde::NormalStream normals(run.seed, 0);
  const std::size_t nm = maturities.size();
  const std::size_t nk = strikes.size();
  // Per maturity: nk calls, nk puts, 1 discounted spot.
  const std::size_t per_m = 2 * nk + 1;
  const int mirrors = run.antithetic ? 2 : 1;

  const auto moments = run_chunks(layout, nm * per_m, [&](std::uint64_t b, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int m = 0; m < mirrors; ++m) {
      heston_path(p, setup.grid, normals, b, m == 0 ? 1.0 : -1.0, setup.obs,
                  [&](std::size_t i, double s, double) {
                    const double d = setup.obs.discount[i];
                    double* o = out.data() + i * per_m;
                    for (std::size_t k = 0; k < nk; ++k) {
                      o[k] += d * std::max(s - strikes[k], 0.0) / mirrors;
                      o[nk + k] += d * std::max(strikes[k] - s, 0.0) / mirrors;
                    }
                    o[2 * nk] += d * s / mirrors;
                  });
    }
  });

  HestonSurface out;
  for (std::size_t i = 0; i < nm; ++i) {
    for (std::size_t k = 0; k < nk; ++k) {
      const Moments& c = moments[i * per_m + k];
      const Moments& q = moments[i * per_m + nk + k];
      out.calls.quotes.push_back({maturities[i], strikes[k], c.mean, c.stderr_of_mean()});
      out.puts.quotes.push_back({maturities[i], strikes[k], q.mean, q.stderr_of_mean()});
    }
    const Moments& f = moments[i * per_m + 2 * nk];
    out.discounted_spot.push_back({f.mean, f.stderr_of_mean()});
  }
  return out;
}

std::vector<Estimate> heston_mc_lookback(const HestonParams& p, const std::vector<double>& maturities,
                                         const HestonRun& run) {
  const Setup setup = make_setup(p, maturities, run);
  const auto layout = layout_of(run);
  const sde::NormalStream normals(run.seed, 1);
  const int mirrors = run.antithetic ? 2 : 1;
  const auto moments = run_chunks(layout, maturities.size(), [&](std::uint64_t b, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int m = 0; m < mirrors; ++m) {
      heston_path(p, setup.grid, normals, b, m == 0 ? 1.0 : -1.0, setup.obs,
                  [&](std::size_t i, double s, double smax) {
                    out[i] += setup.obs.discount[i] * (smax - s) / mirrors;
                  });
    }
  });
  std::vector<Estimate> out;
  for (const auto& m : moments) out.push_back({m.mean, m.stderr_of_mean()});
  return out;
}

}  // namespace nsde::market
