#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nsde/nsde.h"

namespace {

constexpr int kVerifyFailed = 6;

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out;
  long long seed = -1;
  int threads = -1;
};

struct Instrument {
  std::string checkpoint;
  std::string kind = "call";
  std::string maturity;
  double strike = 1.0;
  unsigned long long paths = 400000;
  unsigned long long chunk = 4096;
  bool no_antithetic = false;
  bool no_hedge = false;
  long long seed = 1;
};

int report_error(nsde_status s) {
  std::fprintf(stderr, "error (%s): %s\n", nsde_status_name(s), nsde_last_error());
  return static_cast<int>(s);
}

#define TRY(call)                              \
  do {                                         \
    const nsde_status s_ = (call);             \
    if (s_ != NSDE_OK) return report_error(s_); \
  } while (0)

void print_line(const char* line, void*) {
  std::fprintf(stderr, "%s\n", line);
  std::fflush(stderr);
}

// Defaults, then the config file, then --set, then the dedicated flags.
int build_config(const Common& c, nsde_config** out) {
  if (c.config_file.empty()) TRY(nsde_config_new(out));
  else TRY(nsde_config_load(c.config_file.c_str(), out));
  for (const auto& o : c.overrides) TRY(nsde_config_override(*out, o.c_str()));
  if (!c.out.empty()) TRY(nsde_config_set(*out, "run.out_dir", c.out.c_str()));
  if (c.seed >= 0) TRY(nsde_config_set(*out, "run.seed", std::to_string(c.seed).c_str()));
  if (c.threads >= 0) {
    TRY(nsde_config_set(*out, "run.threads", std::to_string(c.threads).c_str()));
    TRY(nsde_set_threads(c.threads));
  }
  return 0;
}

std::string get(const nsde_config* c, const char* key) {
  size_t n = 0;
  nsde_config_get(c, key, nullptr, 0, &n);
  std::string s(n, '\0');
  nsde_config_get(c, key, s.data(), s.size(), &n);
  s.resize(n ? n - 1 : 0);
  return s;
}

// Decimal or a fraction such as 2/12.
double number(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) return std::stod(s);
  return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
}

const CLI::Validator kNumber(
    [](std::string& s) -> std::string {
      try {
        const auto slash = s.find('/');
        std::size_t used = 0;
        std::stod(s.substr(0, slash), &used);
        if (used != s.substr(0, slash).size()) return "not a number: " + s;
        if (slash != std::string::npos) {
          const std::string d = s.substr(slash + 1);
          if (std::stod(d, &used) == 0.0 || used != d.size()) return "bad denominator: " + s;
        }
      } catch (const std::exception&) {
        return "not a number: " + s;
      }
      return "";
    },
    "NUMBER");

nsde_instrument_kind kind_of(const std::string& k) {
  if (k == "put") return NSDE_PUT;
  if (k == "lookback") return NSDE_LOOKBACK;
  return NSDE_CALL;
}

const char* kind_name(nsde_instrument_kind k) {
  switch (k) {
    case NSDE_CALL: return "call";
    case NSDE_PUT: return "put";
    case NSDE_LOOKBACK: return "lookback";
  }
  return "?";
}

void print_result(const nsde_instrument_result& r, bool show_target) {
  std::printf("%-8s T=%-10.6g K=%-8.4g price %.6f +- %.2e  (raw %.6f +- %.2e)", kind_name(r.kind), r.maturity,
              r.kind == NSDE_LOOKBACK ? NAN : r.strike, r.price.mean, r.price.std_error, r.raw_price.mean,
              r.raw_price.std_error);
  if (show_target) std::printf("  target %.6f", r.target);
  if (!std::isnan(r.model_iv)) std::printf("  iv %.4f", r.model_iv);
  if (show_target && !std::isnan(r.target_iv)) std::printf(" / %.4f", r.target_iv);
  std::printf("\n");
}

nsde_eval_options eval_options(const Instrument& in) {
  nsde_eval_options o;
  nsde_eval_options_default(&o);
  o.seed = static_cast<uint64_t>(in.seed);
  o.paths = in.paths;
  o.chunk_paths = in.chunk;
  o.antithetic = in.no_antithetic ? 0 : 1;
  o.use_hedge = in.no_hedge ? 0 : 1;
  return o;
}

int run_calibrate(const Common& common, const std::string& direction) {
  nsde_config* cfg = nullptr;
  if (int rc = build_config(common, &cfg)) return rc;
  if (!direction.empty()) TRY(nsde_config_set(cfg, "calibrate.direction", direction.c_str()));
  nsde_calibration* r = nullptr;
  const nsde_status s = nsde_calibrate(cfg, print_line, nullptr, &r);
  nsde_config_free(cfg);
  if (s != NSDE_OK) return report_error(s);
  for (size_t i = 0; i < nsde_calibration_instruments(r); ++i) {
    nsde_instrument_result x;
    nsde_calibration_instrument(r, i, &x);
    print_result(x, true);
  }
  nsde_instrument_result ex;
  if (nsde_calibration_exotic(r, &ex)) print_result(ex, false);
  nsde_estimate ref;
  if (nsde_calibration_reference(r, &ref)) std::printf("reference lookback %.6f +- %.2e\n", ref.mean, ref.std_error);
  std::printf("final mse %.3e after %zu epochs (%.1f s)\n", nsde_calibration_final_mse(r), nsde_calibration_epochs(r),
              nsde_calibration_seconds(r));
  nsde_calibration_free(r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural SDE calibration, robust price bounds and hedging"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nsde_version()));
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_file, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", common.overrides, "override, e.g. calibrate.epochs=200")->allow_extra_args(false);
    sub->add_option("-o,--out", common.out, "output directory (run.out_dir)");
    sub->add_option("--seed", common.seed, "run seed (run.seed)")->check(CLI::NonNegativeNumber);
    sub->add_option("--threads", common.threads, "worker thread cap")->check(CLI::NonNegativeNumber);
  };

  auto* gen = app.add_subcommand("gen-market", "simulate the Heston market surface and lookback reference");
  add_common(gen);
  auto* cal = app.add_subcommand("calibrate", "calibrate to the vanilla surface");
  add_common(cal);
  auto* bound = app.add_subcommand("bound", "lower or upper price bound for the lookback");
  add_common(bound);
  std::string direction;
  bound->add_option("-d,--direction", direction, "lower or upper")
      ->required()
      ->check(CLI::IsMember({"lower", "upper"}));

  Instrument inst;
  std::string eval_out;
  auto add_instrument = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", inst.checkpoint, "checkpoint.txt of a calibration run")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--kind", inst.kind, "call, put or lookback")->check(CLI::IsMember({"call", "put", "lookback"}));
    sub->add_option("-T,--maturity", inst.maturity, "maturity in years, e.g. 0.5 or 2/12")->required()->check(kNumber);
    sub->add_option("-K,--strike", inst.strike, "strike (ignored for lookback)");
    sub->add_option("--paths", inst.paths, "evaluation paths");
    sub->add_option("--chunk", inst.chunk, "paths per chunk");
    sub->add_option("--seed", inst.seed, "evaluation seed")->check(CLI::NonNegativeNumber);
    sub->add_flag("--no-antithetic", inst.no_antithetic, "plain Monte Carlo");
    sub->add_flag("--no-hedge", inst.no_hedge, "skip the control variate");
    sub->add_option("--threads", common.threads, "worker thread cap")->check(CLI::NonNegativeNumber);
  };
  auto* price = app.add_subcommand("price", "price an instrument from a checkpoint");
  add_instrument(price);
  auto* heval = app.add_subcommand("hedge-eval", "hedging error of the trained strategy");
  add_instrument(heval);
  heval->add_option("-o,--out", eval_out, "output directory")->required();

  std::vector<std::string> runs;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "quantiles of exotic price and final MSE across runs");
  rep->add_option("runs", runs, "calibration run directories")->required()->check(CLI::ExistingDirectory);
  rep->add_option("-o,--out", report_out, "output directory")->required();

  std::string check_dir;
  auto* self = app.add_subcommand("selfcheck", "verify a run directory against its manifest");
  self->add_option("run", check_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  auto* print = app.add_subcommand("print-config", "print the resolved configuration");
  add_common(print);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (common.threads >= 0) TRY(nsde_set_threads(common.threads));

  if (*print) {
    nsde_config* cfg = nullptr;
    if (int rc = build_config(common, &cfg)) return rc;
    size_t n = 0;
    nsde_config_dump(cfg, nullptr, 0, &n);
    std::string text(n, '\0');
    nsde_config_dump(cfg, text.data(), text.size(), &n);
    std::fputs(text.c_str(), stdout);
    nsde_config_free(cfg);
    return 0;
  }
  if (*gen) {
    nsde_config* cfg = nullptr;
    if (int rc = build_config(common, &cfg)) return rc;
    const nsde_status s = nsde_gen_market(cfg, print_line, nullptr);
    if (s == NSDE_OK) std::printf("market written to %s\n", get(cfg, "run.out_dir").c_str());
    nsde_config_free(cfg);
    return s == NSDE_OK ? 0 : report_error(s);
  }
  if (*cal) return run_calibrate(common, "");
  if (*bound) return run_calibrate(common, direction);
  if (*price) {
    const nsde_eval_options o = eval_options(inst);
    nsde_instrument_result r;
    int hedged = 0;
    TRY(nsde_price(inst.checkpoint.c_str(), kind_of(inst.kind), number(inst.maturity), inst.strike, &o, &r, &hedged));
    print_result(r, false);
    std::printf("control variate: %s\n", hedged ? "trained hedge" : "none");
    return 0;
  }
  if (*heval) {
    const nsde_eval_options o = eval_options(inst);
    nsde_hedge_eval_result r;
    TRY(nsde_hedge_eval(inst.checkpoint.c_str(), kind_of(inst.kind), number(inst.maturity), inst.strike, &o,
                        eval_out.c_str(), &r));
    std::printf("E[s^2] %.6e  Var[payoff] %.6e  paths %llu  hedge %s\n", r.mean_square, r.payoff_variance,
                static_cast<unsigned long long>(r.paths), r.hedged ? "trained" : "none");
    return 0;
  }
  if (*rep) {
    std::vector<const char*> dirs;
    for (const auto& d : runs) dirs.push_back(d.c_str());
    nsde_report* r = nullptr;
    TRY(nsde_report_runs(dirs.data(), dirs.size(), report_out.c_str(), &r));
    std::printf("%-9s %-13s %4s %12s %12s %12s %12s %12s\n", "direction", "metric", "runs", "min", "q25", "median",
                "q75", "max");
    for (size_t i = 0; i < nsde_report_rows(r); ++i) {
      const char* d = nullptr;
      const char* m = nullptr;
      size_t n = 0;
      double q[5];
      nsde_report_row(r, i, &d, &m, &n, q);
      std::printf("%-9s %-13s %4zu %12.6g %12.6g %12.6g %12.6g %12.6g\n", d, m, n, q[0], q[1], q[2], q[3], q[4]);
    }
    nsde_report_free(r);
    return 0;
  }
  if (*self) {
    int ok = 0;
    TRY(nsde_selfcheck(check_dir.c_str(), print_line, nullptr, &ok));
    std::printf("%s\n", ok ? "selfcheck passed" : "selfcheck FAILED");
    return ok ? 0 : kVerifyFailed;
  }
  return 1;
}
