#include "app/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>
#include <omp.h>

#include "calibrate/gradients.hpp"
#include "calibrate/report.hpp"
#include "hedge/hedge.hpp"
#include "market/black_scholes.hpp"
#include "market/surface.hpp"

namespace nsde::app {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void say(const Log& log, const std::string& s) {
  if (log) log(s);
}

fs::path prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".nsde_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory is not writable: " + dir.string());
  }
  fs::remove(probe, ec);
  return dir;
}

Artifact artifact(const fs::path& dir, const std::string& name) { return {name, sha256_file(dir / name)}; }

Artifact input(const fs::path& path) { return {fs::absolute(path).string(), sha256_file(path)}; }

std::string hash_doubles(const std::vector<double>& v) {
  return sha256_hex(std::string(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)));
}

std::string parameter_hash(const Session& s) {
  std::vector<double> all = s.theta.flat_values();
  const auto x = s.xi.flat_values();
  all.insert(all.end(), x.begin(), x.end());
  return hash_doubles(all);
}

std::vector<double> market_maturities(const AppConfig& c) { return market::bimonthly_maturities(c.market.maturities); }

// Lookback prices on a small prefix of the configured run.
std::string market_check(const AppConfig& c) {
  market::HestonRun small = c.market.run;
  small.paths = std::min<std::uint64_t>(small.paths, 8192);
  if (small.antithetic && small.paths % 2) --small.paths;
  std::vector<double> v;
  for (const auto& e : market::heston_mc_lookback(c.market.heston, market_maturities(c), small)) {
    v.push_back(e.mean);
    v.push_back(e.std_error);
  }
  return hash_doubles(v);
}

void apply_run_settings(const AppConfig& c) {
  c.validate();
  set_threads(c.run.threads);
}

}  // namespace

const char* version() { return "0.4.0"; }

void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

void write_manifest(const fs::path& dir, const Manifest& m) {
  json j;
  j["command"] = m.command;
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["config_fingerprint"] = m.config_fingerprint;
  j["check"] = m.check;
  auto list = [](const std::vector<Artifact>& a) {
    json out = json::array();
    for (const auto& x : a) out.push_back({{"path", x.path}, {"sha256", x.sha256}});
    return out;
  };
  j["inputs"] = list(m.inputs);
  j["artifacts"] = list(m.artifacts);
  json args = json::object();
  for (const auto& [k, v] : m.arguments) args[k] = v;
  j["arguments"] = args;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no manifest.json in " + dir.string());
  try {
    const json j = json::parse(in);
    Manifest m;
    m.command = j.at("command").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config").get<std::string>();
    m.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    m.check = j.at("check").get<std::string>();
    for (const auto& a : j.at("inputs")) m.inputs.push_back({a.at("path"), a.at("sha256")});
    for (const auto& a : j.at("artifacts")) m.artifacts.push_back({a.at("path"), a.at("sha256")});
    for (const auto& [k, v] : j.at("arguments").items()) m.arguments.emplace_back(k, v.get<std::string>());
    return m;
  } catch (const json::exception& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  }
}

GenMarketResult gen_market(const AppConfig& c, const Log& log) {
  apply_run_settings(c);
  GenMarketResult r;
  r.dir = prepare_dir(c.out_dir());
  const auto mats = market_maturities(c);
  const auto strikes = market::strike_preset(c.market.strikes);
  say(log, "simulating Heston surface: " + std::to_string(mats.size()) + " maturities x " +
               std::to_string(strikes.size()) + " strikes, " + std::to_string(c.market.run.paths) + " paths");
  r.surface = market::heston_mc_surface(c.market.heston, mats, strikes, c.market.run);
  for (const auto& w : r.surface.calls.monotonicity_warnings()) say(log, "warning: " + w);
  say(log, "simulating lookback reference");
  market::HestonRun lb = c.market.run;
  const auto est = market::heston_mc_lookback(c.market.heston, mats, lb);
  for (std::size_t i = 0; i < mats.size(); ++i) r.lookback.push_back({mats[i], est[i].mean, est[i].std_error});

  market::write_surface(r.dir / "surface.csv", r.surface.calls);
  market::write_surface(r.dir / "puts.csv", r.surface.puts);
  market::write_lookback(r.dir / "lookback.csv", r.lookback);

  Manifest m;
  m.command = "gen-market";
  m.version = version();
  m.seed = c.market.run.seed;
  m.config = c.dump();
  m.config_fingerprint = c.fingerprint();
  m.check = market_check(c);
  for (const char* f : {"surface.csv", "puts.csv", "lookback.csv"}) m.artifacts.push_back(artifact(r.dir, f));
  write_manifest(r.dir, m);
  return r;
}

calibrate::CalibTask calibration_task(const AppConfig& c) {
  if (c.data.surface.empty()) throw ConfigError("data.surface is not set (path to a call surface CSV)");
  if (!fs::exists(c.data.surface)) throw IoError("market file not found: " + c.data.surface);
  const market::MarketSurface surf = market::read_surface(c.data.surface);
  const auto all = surf.maturities();
  if (static_cast<int>(all.size()) < c.calibrate.maturities)
    throw ConfigError("surface has " + std::to_string(all.size()) + " maturities, calibrate.maturities asks for " +
                      std::to_string(c.calibrate.maturities));
  const std::vector<double> mats(all.begin(), all.begin() + c.calibrate.maturities);

  calibrate::CalibTask task;
  task.grid = sde::TimeGrid::uniform(mats.back(), c.model.steps_per_year);
  const std::vector<double> preset =
      c.calibrate.strikes > 0 ? market::strike_preset(c.calibrate.strikes) : std::vector<double>{};
  for (double t : mats) {
    const auto quotes = surf.at(t);
    std::size_t used = 0;
    for (const auto& q : quotes) {
      const bool keep = preset.empty() || std::any_of(preset.begin(), preset.end(),
                                                      [&](double k) { return std::abs(k - q.strike) < 1e-9; });
      if (!keep) continue;
      task.vanillas.push_back(market::OptionSpec::call(t, q.strike));
      task.targets.push_back(q.price);
      ++used;
    }
    if (!preset.empty() && used != preset.size())
      throw ConfigError("surface lacks some of the " + std::to_string(preset.size()) + " preset strikes at T=" +
                        market::format_double(t));
  }
  if (c.calibrate.exotic == "lookback") task.exotic = market::OptionSpec::lookback(mats.back());
  task.validate();
  return task;
}

namespace {

struct Prepared {
  calibrate::CalibTask task;
  std::unique_ptr<Session> session;
  calibrate::TrainConfig train;
  std::vector<Artifact> inputs;
};

Prepared prepare_calibration(const AppConfig& c) {
  Prepared p;
  p.task = calibration_task(c);
  if (c.calibrate.incremental && p.task.exotic)
    throw ConfigError("incremental training does not train an exotic hedge; set calibrate.exotic = none");
  std::vector<double> mats;
  for (const auto& o : p.task.vanillas)
    if (mats.empty() || mats.back() != o.maturity) mats.push_back(o.maturity);
  p.session = make_session(c.model_config(mats), c.hedge_config(), p.task.instruments(), c.model.steps_per_year);
  p.session->config_fingerprint = c.fingerprint();
  p.inputs.push_back(input(c.data.surface));
  if (!c.calibrate.init.empty()) {
    const auto init = load_checkpoint(c.calibrate.init);
    if (init->model->config().maturities != mats || init->model->kind() != c.model.kind)
      throw ConfigError("checkpoint " + c.calibrate.init + " was trained on a different model or maturity grid");
    copy_parameters(*init, *p.session);
    p.inputs.push_back(input(c.calibrate.init));
  }
  p.train = c.calibrate.train;
  p.train.seed = c.run.seed;
  return p;
}

// Trains and returns the parameter hash after the first epoch (or of the
// initial parameters when there are no epochs).
std::string train_session(Prepared& p, bool incremental, std::vector<calibrate::EpochRecord>* records,
                          std::vector<std::pair<double, double>>* auglag, const Log& log) {
  Session& s = *p.session;
  std::string check = parameter_hash(s);
  int seen = 0;
  double last_lambda = p.train.lambda0, last_c = p.train.c0;
  const int every = std::max(1, p.train.epochs / 20);
  auto on_epoch = [&](const calibrate::EpochRecord& r) {
    if (seen++ == 0) check = parameter_hash(s);
    if (records) records->push_back(r);
    if (auglag && (r.lambda != last_lambda || r.c != last_c)) {
      auglag->emplace_back(r.lambda, r.c);
      last_lambda = r.lambda;
      last_c = r.c;
    }
    if (log && (r.epoch % every == 0 || r.epoch + 1 == p.train.epochs)) {
      std::ostringstream msg;
      msg << "epoch " << r.epoch << "  mse " << r.mse;
      if (p.task.exotic) msg << "  exotic " << r.exotic_price;
      log(msg.str());
    }
  };
  if (incremental) {
    calibrate::incremental_multi_maturity(*s.model, s.theta, *s.hedge, s.xi, p.task, p.train, on_epoch);
  } else {
    calibrate::AugLagState al{p.train.lambda0, p.train.c0, 0};
    calibrate::train(*s.model, s.theta, *s.hedge, s.xi, p.task, p.train, &al, on_epoch);
  }
  return check;
}

void write_iv_csv(const fs::path& path, const calibrate::CalibReport& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "maturity,strike,target_price,model_price,stderr,target_iv,model_iv\n";
  auto opt = [](const std::optional<double>& v) { return v ? market::format_double(*v) : std::string("nan"); };
  for (const auto& i : r.instruments)
    out << market::format_double(i.spec.maturity) << ',' << market::format_double(i.spec.strike) << ','
        << market::format_double(i.target) << ',' << market::format_double(i.price.mean) << ','
        << market::format_double(i.price.std_error) << ',' << opt(i.target_iv) << ',' << opt(i.model_iv) << '\n';
}

}  // namespace

CalibrateResult run_calibration(const AppConfig& c, const Log& log) {
  apply_run_settings(c);
  const auto t0 = std::chrono::steady_clock::now();
  Prepared p = prepare_calibration(c);
  CalibrateResult out;
  out.dir = prepare_dir(c.out_dir());
  say(log, std::to_string(p.task.vanillas.size()) + " vanillas" + (p.task.exotic ? " + lookback" : "") + ", " +
               std::to_string(p.train.epochs) + " epochs of " + std::to_string(p.train.layout.paths) +
               " paths, direction " + calibrate::to_string(p.train.direction));

  std::vector<calibrate::EpochRecord> records;
  std::vector<std::pair<double, double>> auglag;
  const std::string check = train_session(p, c.calibrate.incremental, &records, &auglag, log);

  Session& s = *p.session;
  say(log, "evaluating on " + std::to_string(c.calibrate.eval_paths) + " paths");
  out.report = calibrate::evaluate_report(*s.model, s.theta, *s.hedge, s.xi, p.task,
                                          {c.calibrate.eval_paths, true, p.train.layout.chunk_paths}, c.run.seed,
                                          p.train.use_hedge);
  out.report.direction = p.train.direction;
  out.report.seed = c.run.seed;
  out.report.epochs = records;
  out.report.auglag = auglag;
  out.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!c.data.lookback.empty() && p.task.exotic) {
    for (const auto& q : market::read_lookback(c.data.lookback))
      if (std::abs(q.maturity - p.task.exotic->maturity) < 1e-12) out.reference = q;
    p.inputs.push_back(input(c.data.lookback));
  }

  save_checkpoint(out.dir / "checkpoint.txt", s);
  calibrate::write_epochs(out.dir / "epochs.csv", records);
  calibrate::write_summary(out.dir / "summary.json", out.report);
  write_iv_csv(out.dir / "iv.csv", out.report);

  Manifest m;
  m.command = p.train.direction == calibrate::BoundDirection::none ? "calibrate" : "bound";
  m.version = version();
  m.seed = c.run.seed;
  m.config = c.dump();
  m.config_fingerprint = c.fingerprint();
  m.check = check;
  m.inputs = p.inputs;
  for (const char* f : {"checkpoint.txt", "epochs.csv", "summary.json", "iv.csv"})
    m.artifacts.push_back(artifact(out.dir, f));
  write_manifest(out.dir, m);
  return out;
}

namespace {

struct Priced {
  std::unique_ptr<Session> session;
  calibrate::CalibTask task;
  bool hedged = false;
};

Priced price_setup(const PriceRequest& r) {
  Priced p;
  r.spec.validate();
  p.session = load_checkpoint(r.checkpoint);
  const Session& s = *p.session;
  if (r.spec.maturity > s.model->horizon() * (1.0 + 1e-12))
    throw ConfigError("maturity beyond the model's last calibrated maturity");
  p.task.grid = sde::TimeGrid::uniform(r.spec.maturity, s.steps_per_year);
  if (r.spec.kind == market::OptionKind::lookback_call) {
    p.task.exotic = r.spec;
  } else {
    p.task.vanillas = {r.spec};
    p.task.targets = {0.0};
  }
  const auto out = s.hedge_output(r.spec);
  p.hedged = r.use_hedge && out.has_value();
  if (out) p.task.hedge_columns = {*out};
  else p.task.hedge_columns = {0};
  p.task.validate();
  return p;
}

}  // namespace

PriceResult price(const PriceRequest& r) {
  Priced p = price_setup(r);
  Session& s = *p.session;
  const auto rep = calibrate::evaluate_report(*s.model, s.theta, *s.hedge, s.xi, p.task,
                                              {r.paths, r.antithetic, r.chunk_paths}, r.seed, p.hedged);
  PriceResult out;
  out.hedged = p.hedged;
  out.result = rep.exotic ? *rep.exotic : rep.instruments.at(0);
  if (!out.hedged) {
    out.result.price = out.result.raw_price;
    out.result.variance = out.result.raw_variance;
  }
  if (out.result.spec.kind == market::OptionKind::european_call) {
    const auto iv = market::implied_vol(out.result.price.mean, s.model->s0(), r.spec.strike, s.model->rate(),
                                        r.spec.maturity);
    out.result.model_iv = iv.vol;
  }
  return out;
}

HedgeEvalResult hedge_eval(const PriceRequest& r, const fs::path& out_dir) {
  Priced p = price_setup(r);
  Session& s = *p.session;
  prepare_dir(out_dir);
  calibrate::TrainConfig cfg;
  cfg.layout = {r.paths, r.antithetic, r.chunk_paths};
  cfg.seed = r.seed;
  cfg.use_hedge = p.hedged;
  const calibrate::Trainer trainer(*s.model, s.theta, *s.hedge, s.xi, p.task, cfg);
  const calibrate::Batch batch = trainer.evaluate(0xfffffff0u, cfg.layout, false, false);
  std::vector<double> payoff, integral;
  payoff.reserve(r.paths);
  integral.reserve(r.paths);
  for (const auto& c : batch.chunks) {
    const ad::Matrix& pv = c.payoff.values();
    const ad::Matrix& iv = c.integral.values();
    for (Eigen::Index i = 0; i < pv.rows(); ++i) {
      payoff.push_back(pv(i, 0));
      integral.push_back(iv(i, 0));
    }
  }
  const auto stats = hedge::hedge_error_stats(payoff, integral);
  hedge::write_residuals(out_dir / "residuals.csv", stats.residuals);

  // 50-bin histogram of the residuals
  const auto [lo_it, hi_it] = std::minmax_element(stats.residuals.begin(), stats.residuals.end());
  const double lo = *lo_it, hi = *hi_it > *lo_it ? *hi_it : *lo_it + 1e-12;
  const int bins = 50;
  std::vector<std::uint64_t> counts(bins, 0);
  for (double x : stats.residuals)
    ++counts[std::min(bins - 1, static_cast<int>((x - lo) / (hi - lo) * bins))];
  {
    std::ofstream h(out_dir / "histogram.csv");
    if (!h) throw IoError("cannot write histogram.csv");
    h << "lower,upper,count\n";
    for (int b = 0; b < bins; ++b)
      h << market::format_double(lo + (hi - lo) * b / bins) << ',' << market::format_double(lo + (hi - lo) * (b + 1) / bins)
        << ',' << counts[static_cast<std::size_t>(b)] << '\n';
  }

  HedgeEvalResult out;
  out.mean_square = stats.mean_square;
  Moments m;
  for (double x : payoff) m.add(x);
  out.payoff_variance = m.variance();
  out.paths = payoff.size();
  out.hedged = p.hedged;

  Manifest man;
  man.command = "hedge-eval";
  man.version = version();
  man.seed = r.seed;
  man.inputs.push_back(input(r.checkpoint));
  man.arguments = {{"instrument", r.spec.label()},
                   {"paths", std::to_string(r.paths)},
                   {"antithetic", r.antithetic ? "true" : "false"},
                   {"hedge", p.hedged ? "true" : "false"},
                   {"mean_square", market::format_double(out.mean_square)}};
  for (const char* f : {"residuals.csv", "histogram.csv"}) man.artifacts.push_back(artifact(out_dir, f));
  write_manifest(out_dir, man);
  return out;
}

double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw ConfigError("quantile of an empty set");
  std::sort(x.begin(), x.end());
  const double h = p * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

std::vector<QuantileRow> report(const std::vector<fs::path>& runs, const fs::path& out_dir) {
  if (runs.empty()) throw ConfigError("report: no run directories given");
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_direction;
  std::string grid_ref;
  std::vector<Artifact> inputs;
  for (const auto& dir : runs) {
    const fs::path summary = dir / "summary.json";
    if (!fs::exists(summary)) throw IoError("no summary.json in " + dir.string());
    const auto r = calibrate::read_summary(summary);
    std::string grid;
    for (const auto& i : r.instruments)
      grid += market::to_string(i.spec.kind) + ":" + market::format_double(i.spec.maturity) + ":" +
              market::format_double(i.spec.strike) + ";";
    grid += r.exotic ? r.exotic->spec.label() : "no exotic";
    if (grid_ref.empty()) grid_ref = grid;
    else if (grid != grid_ref)
      throw ConfigError("report: " + dir.string() + " was calibrated on a different instrument grid");
    auto& slot = by_direction[calibrate::to_string(r.direction)];
    slot.first.push_back(r.exotic ? r.exotic->price.mean : std::nan(""));
    slot.second.push_back(r.final_mse);
    inputs.push_back(input(summary));
  }
  std::vector<QuantileRow> rows;
  for (const char* d : {"lower", "none", "upper"}) {
    const auto it = by_direction.find(d);
    if (it == by_direction.end()) continue;
    for (int k = 0; k < 2; ++k) {
      QuantileRow row;
      row.direction = d;
      row.metric = k == 0 ? "exotic_price" : "final_mse";
      const auto& v = k == 0 ? it->second.first : it->second.second;
      row.runs = v.size();
      const double ps[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
      for (int i = 0; i < 5; ++i) row.q[i] = quantile(v, ps[i]);
      rows.push_back(row);
    }
  }
  prepare_dir(out_dir);
  {
    std::ofstream out(out_dir / "report.csv");
    if (!out) throw IoError("cannot write report.csv");
    out << "direction,metric,runs,min,q25,median,q75,max\n";
    for (const auto& r : rows) {
      out << r.direction << ',' << r.metric << ',' << r.runs;
      for (double q : r.q) out << ',' << market::format_double(q);
      out << '\n';
    }
  }
  Manifest m;
  m.command = "report";
  m.version = version();
  m.inputs = inputs;
  m.artifacts.push_back(artifact(out_dir, "report.csv"));
  write_manifest(out_dir, m);
  return rows;
}

SelfCheckResult selfcheck(const fs::path& dir, const Log& log) {
  SelfCheckResult res;
  auto fail = [&](const std::string& msg) {
    res.ok = false;
    res.messages.push_back("FAIL " + msg);
    say(log, "FAIL " + msg);
  };
  auto pass = [&](const std::string& msg) {
    res.messages.push_back("ok   " + msg);
    say(log, "ok   " + msg);
  };
  const Manifest m = read_manifest(dir);
  for (const auto& a : m.artifacts) {
    const fs::path p = fs::path(a.path).is_absolute() ? fs::path(a.path) : dir / a.path;
    if (!fs::exists(p)) fail(a.path + " is missing");
    else if (sha256_file(p) != a.sha256) fail(a.path + " does not match its recorded hash");
    else pass(a.path + " hash");
  }
  for (const auto& a : m.inputs) {
    if (!fs::exists(a.path)) fail("input " + a.path + " is missing");
    else if (sha256_file(a.path) != a.sha256) fail("input " + a.path + " changed since the run");
    else pass("input " + a.path + " hash");
  }
  if (m.command == "gen-market" || m.command == "calibrate" || m.command == "bound") {
    const AppConfig c = parse_config(m.config);
    if (c.fingerprint() != m.config_fingerprint) fail("config fingerprint");
    std::string again;
    if (m.command == "gen-market") {
      again = market_check(c);
    } else {
      AppConfig one = c;
      if (one.calibrate.train.epochs > 0) one.calibrate.train.epochs = 1;
      Prepared p = prepare_calibration(one);
      again = train_session(p, one.calibrate.incremental, nullptr, nullptr, {});
    }
    if (again == m.check) pass(m.command + " fingerprint re-run");
    else fail(m.command + " fingerprint re-run differs");
  }
  return res;
}

}  // namespace nsde::app
