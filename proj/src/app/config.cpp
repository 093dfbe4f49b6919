#include "app/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "market/surface.hpp"

namespace nsde::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected a boolean, got '" + s + "'");
}

std::uint64_t parse_count(const std::string& s) {
  const double x = parse_number(s);
  if (!(x >= 0.0) || x != std::floor(x) || x > 9.0e15) throw ConfigError("expected a nonnegative integer, got '" + s + "'");
  return static_cast<std::uint64_t>(x);
}

int parse_int(const std::string& s) {
  const double x = parse_number(s);
  if (x != std::floor(x) || std::abs(x) > 2.0e9) throw ConfigError("expected an integer, got '" + s + "'");
  return static_cast<int>(x);
}

std::string fmt(double x) { return market::format_double(x); }
std::string fmt(bool b) { return b ? "true" : "false"; }

struct Key {
  std::string name;
  std::function<std::string(const AppConfig&)> get;
  std::function<void(AppConfig&, const std::string&)> set;
};

#define NSDE_NUM(key, field)                                                  \
  Key {                                                                       \
    key, [](const AppConfig& c) { return fmt(static_cast<double>(c.field)); }, \
        [](AppConfig& c, const std::string& v) { c.field = parse_number(v); } \
  }
#define NSDE_INT(key, field)                                               \
  Key {                                                                    \
    key, [](const AppConfig& c) { return std::to_string(c.field); },       \
        [](AppConfig& c, const std::string& v) { c.field = parse_int(v); } \
  }
#define NSDE_COUNT(key, field)                                               \
  Key {                                                                      \
    key, [](const AppConfig& c) { return std::to_string(c.field); },         \
        [](AppConfig& c, const std::string& v) { c.field = parse_count(v); } \
  }
#define NSDE_BOOL(key, field)                                               \
  Key {                                                                     \
    key, [](const AppConfig& c) { return fmt(c.field); },                   \
        [](AppConfig& c, const std::string& v) { c.field = parse_bool(v); } \
  }
#define NSDE_STR(key, field)                                   \
  Key {                                                        \
    key, [](const AppConfig& c) { return c.field; },           \
        [](AppConfig& c, const std::string& v) { c.field = v; } \
  }
#define NSDE_LIST(key, field)                                                   \
  Key {                                                                         \
    key, [](const AppConfig& c) { return format_int_list(c.field); },           \
        [](AppConfig& c, const std::string& v) { c.field = parse_int_list(v); } \
  }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      NSDE_COUNT("run.seed", run.seed),
      NSDE_STR("run.out_dir", run.out_dir),
      NSDE_INT("run.threads", run.threads),

      NSDE_NUM("market.x0", market.heston.x0),
      NSDE_NUM("market.rate", market.heston.rate),
      NSDE_NUM("market.kappa", market.heston.kappa),
      NSDE_NUM("market.mu", market.heston.mu),
      NSDE_NUM("market.eta", market.heston.eta),
      NSDE_NUM("market.v0", market.heston.v0),
      NSDE_NUM("market.rho", market.heston.rho),
      NSDE_INT("market.maturities", market.maturities),
      NSDE_INT("market.strikes", market.strikes),
      NSDE_COUNT("market.paths", market.run.paths),
      NSDE_BOOL("market.antithetic", market.run.antithetic),
      NSDE_COUNT("market.seed", market.run.seed),
      NSDE_INT("market.steps_per_year", market.run.steps_per_year),
      NSDE_COUNT("market.chunk_paths", market.run.chunk_paths),

      NSDE_STR("data.surface", data.surface),
      NSDE_STR("data.lookback", data.lookback),

      Key{"model.kind", [](const AppConfig& c) { return sde::to_string(c.model.kind); },
          [](AppConfig& c, const std::string& v) { c.model.kind = sde::parse_model_kind(v); }},
      NSDE_LIST("model.hidden", model.hidden),
      NSDE_INT("model.steps_per_year", model.steps_per_year),
      NSDE_NUM("model.initial_vol", model.initial_vol),
      NSDE_NUM("model.final_layer_scale", model.final_layer_scale),
      NSDE_NUM("model.initial_v0", model.initial_v0),
      NSDE_NUM("model.initial_rho", model.initial_rho),

      NSDE_LIST("hedge.hidden", hedge.hidden),
      NSDE_NUM("hedge.final_layer_scale", hedge.final_layer_scale),

      NSDE_INT("calibrate.maturities", calibrate.maturities),
      NSDE_INT("calibrate.strikes", calibrate.strikes),
      NSDE_STR("calibrate.exotic", calibrate.exotic),
      NSDE_INT("calibrate.epochs", calibrate.train.epochs),
      NSDE_NUM("calibrate.lr_theta", calibrate.train.lr_theta),
      NSDE_NUM("calibrate.lr_xi", calibrate.train.lr_xi),
      NSDE_INT("calibrate.lr_halving", calibrate.train.lr_halving),
      NSDE_COUNT("calibrate.train_paths", calibrate.train.layout.paths),
      NSDE_BOOL("calibrate.antithetic", calibrate.train.layout.antithetic),
      NSDE_COUNT("calibrate.chunk_paths", calibrate.train.layout.chunk_paths),
      NSDE_COUNT("calibrate.eval_paths", calibrate.eval_paths),
      NSDE_BOOL("calibrate.hedge", calibrate.train.use_hedge),
      Key{"calibrate.direction",
          [](const AppConfig& c) { return calibrate::to_string(c.calibrate.train.direction); },
          [](AppConfig& c, const std::string& v) { c.calibrate.train.direction = calibrate::parse_direction(v); }},
      NSDE_NUM("calibrate.lambda0", calibrate.train.lambda0),
      NSDE_NUM("calibrate.c0", calibrate.train.c0),
      NSDE_INT("calibrate.auglag_every", calibrate.train.auglag_every),
      NSDE_BOOL("calibrate.randomized", calibrate.train.randomized_maturity),
      NSDE_BOOL("calibrate.incremental", calibrate.incremental),
      NSDE_NUM("calibrate.clip_max_norm", calibrate.train.clip_max_norm),
      NSDE_COUNT("calibrate.memory_mb", calibrate.train.memory_budget_mb),
      NSDE_STR("calibrate.init", calibrate.init),

      NSDE_COUNT("eval.paths", eval.paths),
      NSDE_BOOL("eval.antithetic", eval.antithetic),
      NSDE_COUNT("eval.chunk_paths", eval.chunk_paths),
  };
  return keys;
}

const Key& find_key(const std::string& name) {
  for (const auto& k : registry())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace

double parse_number(const std::string& text) {
  const std::string s = trim(text);
  auto one = [&](const std::string& t) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(t, &used);
    } catch (const std::exception&) {
      throw ConfigError("expected a number, got '" + text + "'");
    }
    if (used != t.size() || !std::isfinite(x)) throw ConfigError("expected a number, got '" + text + "'");
    return x;
  };
  const auto slash = s.find('/');
  if (slash == std::string::npos) return one(s);
  const double den = one(trim(s.substr(slash + 1)));
  if (den == 0.0) throw ConfigError("zero denominator in '" + text + "'");
  return one(trim(s.substr(0, slash))) / den;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const int v = parse_int(item);
    if (v <= 0) throw ConfigError("layer sizes must be positive: '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

void AppConfig::set(const std::string& key, const std::string& value) { find_key(key).set(*this, trim(value)); }

std::string AppConfig::get(const std::string& key) const { return find_key(key).get(*this); }

std::vector<std::string> AppConfig::keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.push_back(k.name);
  return out;
}

std::string AppConfig::dump() const {
  std::string out;
  std::string section;
  for (const auto& k : registry()) {
    const auto dot = k.name.find('.');
    const std::string s = k.name.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(*this) + "\n";
  }
  return out;
}

std::string AppConfig::fingerprint() const { return sha256_hex(dump()); }

void AppConfig::validate() const {
  if (run.threads < 0) throw ConfigError("run.threads must be nonnegative");
  market.heston.validate();
  sde::BatchLayout{market.run.paths, market.run.antithetic, market.run.chunk_paths}.validate();
  if (market.maturities < 1 || market.maturities > 6) throw ConfigError("market.maturities must be in 1..6");
  market::strike_preset(market.strikes);
  if (market.run.steps_per_year < 1 || model.steps_per_year < 1) throw ConfigError("steps_per_year must be positive");
  if (model.hidden.empty() || hedge.hidden.empty()) throw ConfigError("networks need at least one hidden layer");
  if (!(model.initial_vol > 0.0)) throw ConfigError("model.initial_vol must be positive");
  if (calibrate.maturities < 1) throw ConfigError("calibrate.maturities must be at least 1");
  if (calibrate.strikes != 0) market::strike_preset(calibrate.strikes);
  if (calibrate.exotic != "lookback" && calibrate.exotic != "none")
    throw ConfigError("calibrate.exotic must be lookback or none");
  const auto& t = calibrate.train;
  if (t.epochs < 0) throw ConfigError("calibrate.epochs must be nonnegative");
  if (!(t.lr_theta > 0.0) || !(t.lr_xi > 0.0)) throw ConfigError("learning rates must be positive");
  t.layout.validate();
  sde::BatchLayout{calibrate.eval_paths, true, t.layout.chunk_paths}.validate();
  if (t.auglag_every < 1) throw ConfigError("calibrate.auglag_every must be positive");
  if (!(t.lambda0 >= 0.0) || !(t.c0 > 0.0)) throw ConfigError("calibrate.lambda0 >= 0 and calibrate.c0 > 0 required");
  if (t.direction != calibrate::BoundDirection::none && calibrate.exotic == "none")
    throw ConfigError("price bounds need an exotic (calibrate.exotic = lookback)");
  if (calibrate.incremental && (t.direction != calibrate::BoundDirection::none || t.randomized_maturity))
    throw ConfigError("incremental training supports plain calibration only");
  sde::BatchLayout{eval.paths, eval.antithetic, eval.chunk_paths}.validate();
}

std::filesystem::path AppConfig::out_dir() const {
  if (!run.out_dir.empty()) return run.out_dir;
  if (const char* env = std::getenv("NSDE_OUT_DIR"); env && *env) return env;
  return "nsde_out";
}

sde::ModelConfig AppConfig::model_config(std::vector<double> maturities) const {
  sde::ModelConfig m;
  m.kind = model.kind;
  m.s0 = market.heston.x0;
  m.rate = market.heston.rate;
  m.maturities = std::move(maturities);
  m.hidden = model.hidden;
  m.seed = run.seed;
  m.initial_vol = model.initial_vol;
  m.final_layer_scale = model.final_layer_scale;
  m.initial_v0 = model.initial_v0;
  m.initial_rho = model.initial_rho;
  return m;
}

hedge::HedgeConfig AppConfig::hedge_config() const {
  hedge::HedgeConfig h;
  h.hidden = hedge.hidden;
  h.seed = run.seed ^ 0x9e3779b97f4a7c15ULL;
  h.final_layer_scale = hedge.final_layer_scale;
  return h;
}

AppConfig parse_config(const std::string& ini_text) {
  boost::property_tree::ptree tree;
  std::istringstream in(ini_text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  AppConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) c.set(section + "." + key, value.get_value<std::string>());
  }
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(AppConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like section.key=value: '" + assignment + "'");
  c.set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace nsde::app
