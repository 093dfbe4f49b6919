#include "app/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "app/config.hpp"
#include "market/surface.hpp"

namespace nsde::app {

namespace {

constexpr const char* kMagic = "nsde-checkpoint 1";

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double read_double(const std::string& s) {
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw IoError("checkpoint: bad number '" + s + "'");
  return x;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + g17(v[i]);
  return out;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(read_double(item));
  return out;
}

void write_store(std::ostream& out, const ad::ParamStore& store, const char* prefix) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ad::ParamId id{i};
    const ad::Matrix& m = store.value(id);
    out << prefix << store.name(id) << ' ' << m.rows() << ' ' << m.cols();
    for (Eigen::Index k = 0; k < m.size(); ++k) out << ' ' << g17(m.data()[k]);
    out << '\n';
  }
}

// Name -> (rows, cols, values) for one parameter line.
struct ParamLine {
  Eigen::Index rows = 0, cols = 0;
  std::vector<double> values;
};

void read_store(ad::ParamStore& store, const std::map<std::string, ParamLine>& lines, const char* what) {
  if (lines.size() != store.size())
    throw ConfigError(std::string("checkpoint: ") + what + " parameter count does not match the architecture");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ad::ParamId id{i};
    const auto it = lines.find(store.name(id));
    if (it == lines.end()) throw ConfigError("checkpoint: missing parameter '" + store.name(id) + "'");
    ad::Matrix& m = store.value(id);
    if (it->second.rows != m.rows() || it->second.cols != m.cols())
      throw ConfigError("checkpoint: shape mismatch for '" + store.name(id) + "'");
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = it->second.values[static_cast<std::size_t>(k)];
  }
}

std::string transforms(const sde::NeuralSde& m) {
  std::string out = "sigma_s:" + nets::to_string(m.sigma_s().segment(0).output_transform());
  if (m.kind() == sde::ModelKind::lsv) {
    out += ",drift_v:" + nets::to_string(m.drift_v().segment(0).output_transform());
    out += ",sigma_v:" + nets::to_string(m.sigma_v().segment(0).output_transform());
  }
  return out;
}

}  // namespace

std::optional<std::size_t> Session::hedge_output(const market::OptionSpec& spec) const {
  for (std::size_t j = 0; j < instruments.size(); ++j) {
    const auto& o = instruments[j];
    if (o.kind == spec.kind && o.maturity == spec.maturity &&
        (o.kind == market::OptionKind::lookback_call || o.strike == spec.strike))
      return j;
  }
  return std::nullopt;
}

std::unique_ptr<Session> make_session(const sde::ModelConfig& model, const hedge::HedgeConfig& hedge,
                                      std::vector<market::OptionSpec> instruments, int steps_per_year) {
  if (instruments.empty()) throw ConfigError("session: no instruments");
  auto s = std::make_unique<Session>();
  s->model = std::make_unique<sde::NeuralSde>(s->theta, model);
  s->hedge = std::make_unique<hedge::HedgeNet>(s->xi, model.kind, model.maturities.back(), instruments.size(), hedge);
  s->hedge_config = hedge;
  s->instruments = std::move(instruments);
  s->steps_per_year = steps_per_year;
  return s;
}

std::string checkpoint_text(const Session& s) {
  const sde::ModelConfig& m = s.model->config();
  std::ostringstream out;
  out << kMagic << '\n';
  out << "fingerprint " << (s.config_fingerprint.empty() ? "-" : s.config_fingerprint) << '\n';
  out << "seed " << m.seed << '\n';
  out << "model.kind " << sde::to_string(m.kind) << '\n';
  out << "model.s0 " << g17(m.s0) << '\n';
  out << "model.rate " << g17(m.rate) << '\n';
  out << "model.maturities " << join_doubles(m.maturities) << '\n';
  out << "model.hidden " << format_int_list(m.hidden) << '\n';
  out << "model.initial_vol " << g17(m.initial_vol) << '\n';
  out << "model.final_layer_scale " << g17(m.final_layer_scale) << '\n';
  out << "model.initial_v0 " << g17(m.initial_v0) << '\n';
  out << "model.initial_rho " << g17(m.initial_rho) << '\n';
  out << "model.transforms " << transforms(*s.model) << '\n';
  out << "grid.steps_per_year " << s.steps_per_year << '\n';
  out << "hedge.hidden " << format_int_list(s.hedge_config.hidden) << '\n';
  out << "hedge.seed " << s.hedge_config.seed << '\n';
  out << "hedge.final_layer_scale " << g17(s.hedge_config.final_layer_scale) << '\n';
  out << "hedge.instruments " << s.instruments.size() << '\n';
  for (const auto& o : s.instruments)
    out << "instrument " << market::to_string(o.kind) << ' ' << g17(o.maturity) << ' ' << g17(o.strike) << '\n';
  write_store(out, s.theta, "theta ");
  write_store(out, s.xi, "xi ");
  return out.str();
}

void save_checkpoint(const std::filesystem::path& path, const Session& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << checkpoint_text(s);
  if (!out) throw IoError("write failed: " + path.string());
}

std::unique_ptr<Session> parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw IoError("not a checkpoint (bad header)");
  std::map<std::string, std::string> kv;
  std::vector<market::OptionSpec> instruments;
  std::map<std::string, ParamLine> theta, xi;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "instrument") {
      std::string kind, t, k;
      if (!(ls >> kind >> t >> k)) throw IoError("checkpoint: bad instrument line");
      instruments.push_back({market::parse_option_kind(kind), read_double(t), read_double(k)});
    } else if (key == "theta" || key == "xi") {
      std::string name;
      ParamLine p;
      if (!(ls >> name >> p.rows >> p.cols) || p.rows < 0 || p.cols < 0)
        throw IoError("checkpoint: bad parameter header");
      std::string v;
      while (ls >> v) p.values.push_back(read_double(v));
      if (p.values.size() != static_cast<std::size_t>(p.rows * p.cols))
        throw IoError("checkpoint: wrong value count for '" + name + "'");
      (key == "theta" ? theta : xi)[name] = std::move(p);
    } else {
      std::string rest;
      std::getline(ls >> std::ws, rest);
      kv[key] = rest;
    }
  }
  auto need = [&](const std::string& k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw IoError("checkpoint: missing '" + k + "'");
    return it->second;
  };

  sde::ModelConfig m;
  m.kind = sde::parse_model_kind(need("model.kind"));
  m.s0 = read_double(need("model.s0"));
  m.rate = read_double(need("model.rate"));
  m.maturities = split_doubles(need("model.maturities"));
  m.hidden = parse_int_list(need("model.hidden"));
  m.seed = std::stoull(need("seed"));
  m.initial_vol = read_double(need("model.initial_vol"));
  m.final_layer_scale = read_double(need("model.final_layer_scale"));
  m.initial_v0 = read_double(need("model.initial_v0"));
  m.initial_rho = read_double(need("model.initial_rho"));
  hedge::HedgeConfig h;
  h.hidden = parse_int_list(need("hedge.hidden"));
  h.seed = std::stoull(need("hedge.seed"));
  h.final_layer_scale = read_double(need("hedge.final_layer_scale"));
  if (std::stoull(need("hedge.instruments")) != instruments.size())
    throw IoError("checkpoint: instrument count mismatch");

  auto s = make_session(m, h, std::move(instruments), std::stoi(need("grid.steps_per_year")));
  if (transforms(*s->model) != need("model.transforms"))
    throw ConfigError("checkpoint: output transforms do not match the architecture");
  read_store(s->theta, theta, "model");
  read_store(s->xi, xi, "hedge");
  const std::string& fp = need("fingerprint");
  s->config_fingerprint = fp == "-" ? "" : fp;
  return s;
}

std::unique_ptr<Session> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

void copy_parameters(const Session& from, Session& to) {
  auto copy = [](const ad::ParamStore& a, ad::ParamStore& b, const char* what) {
    if (a.size() != b.size()) throw ConfigError(std::string("checkpoint: ") + what + " architecture mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const ad::ParamId id{i};
      if (a.name(id) != b.name(id) || a.value(id).rows() != b.value(id).rows() ||
          a.value(id).cols() != b.value(id).cols())
        throw ConfigError(std::string("checkpoint: ") + what + " architecture mismatch at '" + a.name(id) + "'");
      b.value(id) = a.value(id);
    }
  };
  copy(from.theta, to.theta, "model");
  copy(from.xi, to.xi, "hedge");
}

}  // namespace nsde::app
