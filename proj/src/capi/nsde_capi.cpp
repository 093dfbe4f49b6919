#include "nsde/nsde.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "app/commands.hpp"
#include "app/config.hpp"

struct nsde_config {
  nsde::app::AppConfig value;
};

struct nsde_calibration {
  nsde::app::CalibrateResult value;
};

struct nsde_report {
  std::vector<nsde::app::QuantileRow> rows;
};

namespace {

thread_local std::string g_error;

nsde_status fail(nsde_status s, const std::string& msg) {
  g_error = msg;
  return s;
}

// Runs f and maps exceptions onto status codes.
template <class F>
nsde_status guard(F&& f) {
  try {
    f();
    return NSDE_OK;
  } catch (const nsde::ConfigError& e) {
    return fail(NSDE_ERR_CONFIG, e.what());
  } catch (const nsde::ShapeError& e) {
    return fail(NSDE_ERR_CONFIG, e.what());
  } catch (const nsde::IoError& e) {
    return fail(NSDE_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(NSDE_ERR_IO, e.what());
  } catch (const nsde::NumericError& e) {
    return fail(NSDE_ERR_NUMERIC, e.what());
  } catch (const std::bad_alloc&) {
    return fail(NSDE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(NSDE_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(NSDE_ERR_INTERNAL, "unknown failure");
  }
}

nsde_status copy_out(const std::string& s, char* buf, size_t size, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buf && size > 0) {
    const size_t n = std::min(size - 1, s.size());
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
    if (n < s.size()) return fail(NSDE_ERR_USAGE, "buffer too small");
  }
  return NSDE_OK;
}

nsde::app::Log make_log(nsde_log_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

nsde::market::OptionSpec spec_of(nsde_instrument_kind kind, double maturity, double strike) {
  switch (kind) {
    case NSDE_CALL: return nsde::market::OptionSpec::call(maturity, strike);
    case NSDE_PUT: return nsde::market::OptionSpec::put(maturity, strike);
    case NSDE_LOOKBACK: return nsde::market::OptionSpec::lookback(maturity);
  }
  throw nsde::ConfigError("unknown instrument kind");
}

nsde_instrument_kind kind_of(nsde::market::OptionKind k) {
  switch (k) {
    case nsde::market::OptionKind::european_call: return NSDE_CALL;
    case nsde::market::OptionKind::european_put: return NSDE_PUT;
    case nsde::market::OptionKind::lookback_call: return NSDE_LOOKBACK;
  }
  return NSDE_CALL;
}

void fill(const nsde::calibrate::InstrumentResult& r, nsde_instrument_result* out, bool with_target) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out->kind = kind_of(r.spec.kind);
  out->maturity = r.spec.maturity;
  out->strike = r.spec.strike;
  out->target = with_target ? r.target : nan;
  out->price = {r.price.mean, r.price.std_error};
  out->raw_price = {r.raw_price.mean, r.raw_price.std_error};
  out->variance = r.variance;
  out->raw_variance = r.raw_variance;
  out->model_iv = r.model_iv.value_or(nan);
  out->target_iv = r.target_iv.value_or(nan);
}

nsde::app::PriceRequest request(const char* checkpoint, nsde_instrument_kind kind, double maturity, double strike,
                                const nsde_eval_options* o) {
  if (!checkpoint) throw nsde::ConfigError("null checkpoint path");
  nsde_eval_options d;
  nsde_eval_options_default(&d);
  if (!o) o = &d;
  nsde::app::PriceRequest r;
  r.checkpoint = checkpoint;
  r.spec = spec_of(kind, maturity, strike);
  r.seed = o->seed;
  r.paths = o->paths;
  r.antithetic = o->antithetic != 0;
  r.chunk_paths = o->chunk_paths;
  r.use_hedge = o->use_hedge != 0;
  return r;
}

#define NSDE_REQUIRE(cond, msg) \
  if (!(cond)) return fail(NSDE_ERR_USAGE, msg)

}  // namespace

extern "C" {

const char* nsde_version(void) { return nsde::app::version(); }

const char* nsde_last_error(void) { return g_error.c_str(); }

const char* nsde_status_name(nsde_status s) {
  switch (s) {
    case NSDE_OK: return "ok";
    case NSDE_ERR_USAGE: return "usage error";
    case NSDE_ERR_CONFIG: return "configuration error";
    case NSDE_ERR_IO: return "I/O error";
    case NSDE_ERR_NUMERIC: return "numerical error";
    case NSDE_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

nsde_status nsde_set_threads(int threads) {
  NSDE_REQUIRE(threads >= 0, "thread count must be nonnegative");
  return guard([&] { nsde::app::set_threads(threads); });
}

nsde_status nsde_config_new(nsde_config** out) {
  NSDE_REQUIRE(out, "null output handle");
  return guard([&] { *out = new nsde_config{}; });
}

nsde_status nsde_config_load(const char* path, nsde_config** out) {
  NSDE_REQUIRE(out && path, "null argument");
  return guard([&] { *out = new nsde_config{nsde::app::load_config(path)}; });
}

void nsde_config_free(nsde_config* c) { delete c; }

nsde_status nsde_config_set(nsde_config* c, const char* key, const char* value) {
  NSDE_REQUIRE(c && key && value, "null argument");
  return guard([&] { c->value.set(key, value); });
}

nsde_status nsde_config_override(nsde_config* c, const char* assignment) {
  NSDE_REQUIRE(c && assignment, "null argument");
  return guard([&] { nsde::app::apply_override(c->value, assignment); });
}

nsde_status nsde_config_get(const nsde_config* c, const char* key, char* buf, size_t size, size_t* needed) {
  NSDE_REQUIRE(c && key, "null argument");
  std::string v;
  const nsde_status s = guard([&] { v = c->value.get(key); });
  return s == NSDE_OK ? copy_out(v, buf, size, needed) : s;
}

nsde_status nsde_config_dump(const nsde_config* c, char* buf, size_t size, size_t* needed) {
  NSDE_REQUIRE(c, "null config");
  return copy_out(c->value.dump(), buf, size, needed);
}

nsde_status nsde_config_validate(const nsde_config* c) {
  NSDE_REQUIRE(c, "null config");
  return guard([&] { c->value.validate(); });
}

nsde_status nsde_gen_market(const nsde_config* c, nsde_log_fn log, void* user) {
  NSDE_REQUIRE(c, "null config");
  return guard([&] { nsde::app::gen_market(c->value, make_log(log, user)); });
}

nsde_status nsde_calibrate(const nsde_config* c, nsde_log_fn log, void* user, nsde_calibration** out) {
  NSDE_REQUIRE(c, "null config");
  return guard([&] {
    auto r = nsde::app::run_calibration(c->value, make_log(log, user));
    if (out) *out = new nsde_calibration{std::move(r)};
  });
}

void nsde_calibration_free(nsde_calibration* r) { delete r; }

double nsde_calibration_final_mse(const nsde_calibration* r) {
  return r ? r->value.report.final_mse : std::numeric_limits<double>::quiet_NaN();
}

double nsde_calibration_seconds(const nsde_calibration* r) {
  return r ? r->value.report.seconds : std::numeric_limits<double>::quiet_NaN();
}

size_t nsde_calibration_epochs(const nsde_calibration* r) { return r ? r->value.report.epochs.size() : 0; }

size_t nsde_calibration_instruments(const nsde_calibration* r) {
  return r ? r->value.report.instruments.size() : 0;
}

nsde_status nsde_calibration_instrument(const nsde_calibration* r, size_t i, nsde_instrument_result* out) {
  NSDE_REQUIRE(r && out, "null argument");
  NSDE_REQUIRE(i < r->value.report.instruments.size(), "instrument index out of range");
  fill(r->value.report.instruments[i], out, true);
  return NSDE_OK;
}

int nsde_calibration_exotic(const nsde_calibration* r, nsde_instrument_result* out) {
  if (!r || !r->value.report.exotic) return 0;
  if (out) fill(*r->value.report.exotic, out, false);
  return 1;
}

int nsde_calibration_reference(const nsde_calibration* r, nsde_estimate* out) {
  if (!r || !r->value.reference) return 0;
  if (out) *out = {r->value.reference->price, r->value.reference->std_error};
  return 1;
}

void nsde_eval_options_default(nsde_eval_options* o) {
  if (!o) return;
  o->seed = 1;
  o->paths = 400000;
  o->antithetic = 1;
  o->chunk_paths = 4096;
  o->use_hedge = 1;
}

nsde_status nsde_price(const char* checkpoint, nsde_instrument_kind kind, double maturity, double strike,
                       const nsde_eval_options* o, nsde_instrument_result* out, int* hedged) {
  NSDE_REQUIRE(checkpoint && out, "null argument");
  return guard([&] {
    const auto r = nsde::app::price(request(checkpoint, kind, maturity, strike, o));
    fill(r.result, out, false);
    if (hedged) *hedged = r.hedged ? 1 : 0;
  });
}

nsde_status nsde_hedge_eval(const char* checkpoint, nsde_instrument_kind kind, double maturity, double strike,
                            const nsde_eval_options* o, const char* out_dir, nsde_hedge_eval_result* out) {
  NSDE_REQUIRE(checkpoint && out_dir && out, "null argument");
  return guard([&] {
    const auto r = nsde::app::hedge_eval(request(checkpoint, kind, maturity, strike, o), out_dir);
    *out = {r.mean_square, r.payoff_variance, r.paths, r.hedged ? 1 : 0};
  });
}

nsde_status nsde_report_runs(const char* const* run_dirs, size_t count, const char* out_dir, nsde_report** out) {
  NSDE_REQUIRE(out_dir && (run_dirs || count == 0), "null argument");
  return guard([&] {
    std::vector<std::filesystem::path> dirs;
    for (size_t i = 0; i < count; ++i) {
      if (!run_dirs[i]) throw nsde::ConfigError("null run directory");
      dirs.emplace_back(run_dirs[i]);
    }
    auto rows = nsde::app::report(dirs, out_dir);
    if (out) *out = new nsde_report{std::move(rows)};
  });
}

void nsde_report_free(nsde_report* r) { delete r; }

size_t nsde_report_rows(const nsde_report* r) { return r ? r->rows.size() : 0; }

nsde_status nsde_report_row(const nsde_report* r, size_t i, const char** direction, const char** metric, size_t* runs,
                            double q[5]) {
  NSDE_REQUIRE(r, "null report");
  NSDE_REQUIRE(i < r->rows.size(), "row index out of range");
  const auto& row = r->rows[i];
  if (direction) *direction = row.direction.c_str();
  if (metric) *metric = row.metric.c_str();
  if (runs) *runs = row.runs;
  if (q)
    for (int k = 0; k < 5; ++k) q[k] = row.q[k];
  return NSDE_OK;
}

nsde_status nsde_selfcheck(const char* run_dir, nsde_log_fn log, void* user, int* ok) {
  NSDE_REQUIRE(run_dir && ok, "null argument");
  return guard([&] { *ok = nsde::app::selfcheck(run_dir, make_log(log, user)).ok ? 1 : 0; });
}

}  // extern "C"
