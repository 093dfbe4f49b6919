#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "app/checkpoint.hpp"
#include "app/config.hpp"
#include "calibrate/trainer.hpp"
#include "market/heston.hpp"

namespace nsde::app {

using Log = std::function<void(const std::string&)>;

struct Artifact {
  std::string path;  // relative to the run directory unless absolute
  std::string sha256;
};

/// Everything needed to reproduce a run directory.
struct Manifest {
  std::string command;
  std::string version;
  std::uint64_t seed = 0;
  std::string config;              // resolved INI text
  std::string config_fingerprint;  // sha256 of `config`
  std::string check;               // cheap deterministic re-run fingerprint
  std::vector<Artifact> inputs;
  std::vector<Artifact> artifacts;
  std::vector<std::pair<std::string, std::string>> arguments;
};

void write_manifest(const std::filesystem::path& dir, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& dir);

const char* version();

/// Sets the OpenMP worker cap when n > 0.
void set_threads(int n);

struct GenMarketResult {
  std::filesystem::path dir;
  market::HestonSurface surface;
  std::vector<market::LookbackQuote> lookback;
};

/// Writes surface.csv (calls), puts.csv, lookback.csv and manifest.json.
GenMarketResult gen_market(const AppConfig& c, const Log& log = {});

/// Instruments and targets used for calibration, read from data.surface.
calibrate::CalibTask calibration_task(const AppConfig& c);

struct CalibrateResult {
  std::filesystem::path dir;
  calibrate::CalibReport report;
  std::optional<market::LookbackQuote> reference;  // from data.lookback, when given
};

/// Vanilla calibration or a price bound (calibrate.direction). Writes
/// checkpoint.txt, epochs.csv, summary.json, iv.csv and manifest.json.
CalibrateResult run_calibration(const AppConfig& c, const Log& log = {});

struct PriceRequest {
  std::filesystem::path checkpoint;
  market::OptionSpec spec;
  std::uint64_t seed = 1;
  std::uint64_t paths = 400000;
  bool antithetic = true;
  std::uint64_t chunk_paths = 4096;
  bool use_hedge = true;
};

struct PriceResult {
  calibrate::InstrumentResult result;
  bool hedged = false;  // a trained hedge output was used as control variate
};

PriceResult price(const PriceRequest& r);

struct HedgeEvalResult {
  double mean_square = 0.0;      // E[s^2]
  double payoff_variance = 0.0;  // sample variance of the payoff
  std::uint64_t paths = 0;
  bool hedged = false;
};

/// Writes residuals.csv, histogram.csv and manifest.json into out_dir.
HedgeEvalResult hedge_eval(const PriceRequest& r, const std::filesystem::path& out_dir);

struct QuantileRow {
  std::string direction;
  std::string metric;
  std::size_t runs = 0;
  double q[5] = {0, 0, 0, 0, 0};  // min, q25, median, q75, max
};

/// Linear-interpolation quantile of unsorted data, p in [0, 1].
double quantile(std::vector<double> x, double p);

/// Cross-seed summary of calibration runs; writes report.csv into out_dir.
std::vector<QuantileRow> report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out_dir);

struct SelfCheckResult {
  bool ok = true;
  std::vector<std::string> messages;
};

/// Verifies artifact hashes and re-runs the command's fingerprint.
SelfCheckResult selfcheck(const std::filesystem::path& dir, const Log& log = {});

}  // namespace nsde::app
