#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "calibrate/trainer.hpp"
#include "hedge/hedge.hpp"
#include "market/heston.hpp"
#include "sde/model.hpp"

namespace nsde::app {

struct RunSection {
  std::uint64_t seed = 1;
  std::string out_dir;  // empty: $NSDE_OUT_DIR, then ./nsde_out
  int threads = 0;      // 0: OpenMP default
};

struct MarketSection {
  market::HestonParams heston;
  market::HestonRun run;
  int maturities = 6;  // bimonthly, 2/12 .. 12/12
  int strikes = 21;    // preset size
};

struct DataSection {
  std::string surface;   // call surface CSV
  std::string lookback;  // optional Heston lookback reference CSV
};

struct ModelSection {
  sde::ModelKind kind = sde::ModelKind::lv;
  std::vector<int> hidden{50, 50, 50, 50};
  int steps_per_year = 96;
  double initial_vol = 0.2;
  double final_layer_scale = 0.1;
  double initial_v0 = 0.04;
  double initial_rho = 0.0;
};

struct HedgeSection {
  std::vector<int> hidden{20, 20, 20};
  double final_layer_scale = 0.1;
};

struct CalibrateSection {
  int maturities = 2;  // leading surface maturities used
  int strikes = 11;    // preset subset of the surface strikes; 0 keeps all
  std::string exotic = "lookback";
  calibrate::TrainConfig train;
  std::uint64_t eval_paths = 400000;
  bool incremental = false;
  std::string init;  // checkpoint to start from
};

struct EvalSection {
  std::uint64_t paths = 400000;
  bool antithetic = true;
  std::uint64_t chunk_paths = 4096;
};

struct AppConfig {
  RunSection run;
  MarketSection market;
  DataSection data;
  ModelSection model;
  HedgeSection hedge;
  CalibrateSection calibrate;
  EvalSection eval;

  /// Sets "section.key" from its text form; unknown keys are errors.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  /// INI text with every key, in a fixed order.
  std::string dump() const;
  /// SHA-256 of dump().
  std::string fingerprint() const;

  void validate() const;

  /// Resolved output directory.
  std::filesystem::path out_dir() const;

  sde::ModelConfig model_config(std::vector<double> maturities) const;
  hedge::HedgeConfig hedge_config() const;
};

/// Defaults overlaid with an INI file.
AppConfig load_config(const std::filesystem::path& path);
AppConfig parse_config(const std::string& ini_text);
/// Applies "section.key=value".
void apply_override(AppConfig& c, const std::string& assignment);

std::vector<int> parse_int_list(const std::string& s);
std::string format_int_list(const std::vector<int>& v);
/// Decimal number or fraction such as 2/12.
double parse_number(const std::string& s);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace nsde::app
