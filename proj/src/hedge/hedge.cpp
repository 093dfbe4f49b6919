#include "hedge/hedge.hpp"

#include <cmath>
#include <fstream>

#include "common/stats.hpp"
#include "market/surface.hpp"

namespace nsde::hedge {

namespace {

std::vector<int> sizes(std::size_t inputs, const std::vector<int>& hidden, std::size_t outputs) {
  std::vector<int> s{static_cast<int>(inputs)};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(static_cast<int>(outputs));
  return s;
}

}  // namespace

HedgeNet::HedgeNet(ad::ParamStore& store, sde::ModelKind kind, double horizon, std::size_t outputs,
                   const HedgeConfig& config)
    : kind_(kind),
      horizon_(horizon),
      outputs_(outputs),
      net_(store, "hedge", sizes(kind == sde::ModelKind::lsv ? 4 : 3, config.hidden, outputs),
           nets::OutputTransform::identity, config.seed ^ nets::name_hash("hedge"),
           nets::MlpInit{config.final_layer_scale, {}}) {
  if (outputs == 0) throw ConfigError("hedge: need at least one output");
  if (!(horizon > 0.0)) throw ConfigError("hedge: horizon must be positive");
}

ad::DiffArray HedgeNet::forward(nets::Binder& bind, double t, const ad::Matrix& s, const ad::Matrix& running_max,
                                const ad::Matrix* v) const {
  const Eigen::Index n = s.rows();
  ad::Matrix x(n, static_cast<Eigen::Index>(inputs()));
  x.col(0).setConstant(t / horizon_);
  x.col(1) = s.col(0);
  x.col(2) = running_max.col(0);
  if (kind_ == sde::ModelKind::lsv) {
    if (!v) throw ConfigError("hedge: LSV hedge needs the variance path");
    x.col(3) = v->col(0);
  }
  return net_.forward(bind, ad::DiffArray::constant(std::move(x)));
}

ad::DiffArray stoch_integral(const HedgeNet& hedge, nets::Binder& bind, const sde::PathChunk& paths,
                             const sde::TimeGrid& grid, double rate,
                             const std::vector<market::OptionSpec>& instruments) {
  if (instruments.size() != hedge.outputs()) throw ConfigError("stoch_integral: instrument count mismatch");
  std::vector<std::size_t> outputs(instruments.size());
  for (std::size_t j = 0; j < outputs.size(); ++j) outputs[j] = j;
  return stoch_integral(hedge, bind, paths, grid, rate, instruments, outputs);
}

ad::DiffArray stoch_integral(const HedgeNet& hedge, nets::Binder& bind, const sde::PathChunk& paths,
                             const sde::TimeGrid& grid, double rate,
                             const std::vector<market::OptionSpec>& instruments,
                             const std::vector<std::size_t>& outputs) {
  if (instruments.size() != outputs.size()) throw ConfigError("stoch_integral: one hedge output per instrument");
  bool identity = outputs.size() == hedge.outputs();
  for (std::size_t j = 0; j < outputs.size(); ++j) {
    if (outputs[j] >= hedge.outputs()) throw ConfigError("stoch_integral: hedge output out of range");
    identity = identity && outputs[j] == j;
  }
  const bool lsv = hedge.kind() == sde::ModelKind::lsv;
  std::vector<std::size_t> stop;
  std::size_t last = 0;
  for (const auto& o : instruments) {
    stop.push_back(grid.index_of(o.maturity));
    last = std::max(last, stop.back());
  }
  if (last >= paths.s.size()) throw ConfigError("stoch_integral: paths shorter than the last maturity");
  if (lsv && paths.v.size() < paths.s.size()) throw ConfigError("stoch_integral: missing variance path");

  const Eigen::Index rows = paths.rows();
  const auto width = static_cast<Eigen::Index>(instruments.size());
  ad::Matrix running = paths.s[0].values();
  ad::DiffArray total = ad::DiffArray::filled(rows, width, 0.0);
  ad::DiffArray disc_prev = paths.s[0];
  for (std::size_t k = 0; k < last; ++k) {
    const ad::Matrix& sk = paths.s[k].values();
    running = running.cwiseMax(sk);
    const ad::Matrix* vk = lsv ? &paths.v[k].values() : nullptr;
    ad::DiffArray h = hedge.forward(bind, grid.time(k), sk, running, vk);
    if (!identity) {
      std::vector<ad::DiffArray> picked;
      for (auto o : outputs) picked.push_back(ad::column(h, static_cast<Eigen::Index>(o)));
      h = ad::concat_cols(picked);
    }
    const ad::DiffArray disc_next = ad::scale(paths.s[k + 1], std::exp(-rate * grid.time(k + 1)));
    const ad::DiffArray inc = ad::sub(disc_next, disc_prev);
    disc_prev = disc_next;
    ad::Matrix mask(1, width);
    bool all = true;
    for (Eigen::Index j = 0; j < width; ++j) {
      mask(0, j) = k < stop[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
      all = all && mask(0, j) == 1.0;
    }
    const ad::DiffArray step = all ? ad::mul(h, inc) : ad::mul(h, ad::mul(inc, ad::DiffArray::constant(mask)));
    total = ad::add(total, step);
  }
  return total;
}

ad::DiffArray stoch_integral(const HedgeNet& hedge, nets::Binder& bind, const sde::PathChunk& paths,
                             const sde::TimeGrid& grid, double rate,
                             const std::vector<market::OptionSpec>& instruments, std::size_t index,
                             bool use_detached) {
  if (index >= instruments.size()) throw ConfigError("stoch_integral: instrument index out of range");
  const sde::PathChunk input = use_detached ? sde::detach(paths) : paths;
  return ad::column(stoch_integral(hedge, bind, input, grid, rate, instruments), static_cast<Eigen::Index>(index));
}

ad::DiffArray variance_objective(const ad::DiffArray& payoffs, const ad::DiffArray& integrals) {
  return ad::sum_cols(ad::sample_variance(ad::sub(payoffs, integrals)));
}

HedgeErrorStats hedge_error_stats(const std::vector<double>& payoff, const std::vector<double>& integral) {
  if (payoff.size() != integral.size() || payoff.empty()) throw ConfigError("hedge_error_stats: size mismatch");
  const double mean = sum_pairwise(payoff) / static_cast<double>(payoff.size());
  HedgeErrorStats out;
  out.residuals.resize(payoff.size());
  std::vector<double> sq(payoff.size());
  for (std::size_t i = 0; i < payoff.size(); ++i) {
    out.residuals[i] = payoff[i] - integral[i] - mean;
    sq[i] = out.residuals[i] * out.residuals[i];
  }
  out.mean_square = sum_pairwise(sq) / static_cast<double>(sq.size());
  return out;
}

void write_residuals(const std::filesystem::path& path, const std::vector<double>& residuals) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "residual\n";
  for (double r : residuals) out << market::format_double(r) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace nsde::hedge
