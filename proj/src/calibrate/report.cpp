#include "calibrate/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "market/surface.hpp"

namespace nsde::calibrate {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json to_json(const InstrumentResult& r) {
  return json{{"kind", market::to_string(r.spec.kind)},
              {"maturity", r.spec.maturity},
              {"strike", r.spec.strike},
              {"target", r.target},
              {"price", r.price.mean},
              {"stderr", r.price.std_error},
              {"raw_price", r.raw_price.mean},
              {"raw_stderr", r.raw_price.std_error},
              {"variance", r.variance},
              {"raw_variance", r.raw_variance},
              {"model_iv", optional_number(r.model_iv)},
              {"target_iv", optional_number(r.target_iv)}};
}

InstrumentResult from_json(const json& j) {
  InstrumentResult r;
  r.spec.kind = market::parse_option_kind(j.at("kind").get<std::string>());
  r.spec.maturity = j.at("maturity").get<double>();
  r.spec.strike = j.at("strike").get<double>();
  r.target = j.at("target").get<double>();
  r.price = {j.at("price").get<double>(), j.at("stderr").get<double>()};
  r.raw_price = {j.at("raw_price").get<double>(), j.at("raw_stderr").get<double>()};
  r.variance = j.at("variance").get<double>();
  r.raw_variance = j.at("raw_variance").get<double>();
  r.model_iv = read_optional(j, "model_iv");
  r.target_iv = read_optional(j, "target_iv");
  return r;
}

}  // namespace

void write_epochs(const std::filesystem::path& path, const std::vector<EpochRecord>& epochs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,mse,exotic_price\n";
  for (const auto& e : epochs)
    out << e.epoch << ',' << market::format_double(e.mse) << ',' << market::format_double(e.exotic_price) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<EpochRecord> read_epochs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "epoch,mse,exotic_price")
    throw IoError(path.string() + ": expected header 'epoch,mse,exotic_price'");
  std::vector<EpochRecord> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    EpochRecord e;
    const char* p = line.data();
    const char* end = p + line.size();
    auto r1 = std::from_chars(p, end, e.epoch);
    bool ok = r1.ec == std::errc{} && r1.ptr < end && *r1.ptr == ',';
    if (ok) {
      auto r2 = std::from_chars(r1.ptr + 1, end, e.mse);
      ok = r2.ec == std::errc{} && r2.ptr < end && *r2.ptr == ',';
      if (ok) {
        auto r3 = std::from_chars(r2.ptr + 1, end, e.exotic_price);
        ok = r3.ec == std::errc{} && r3.ptr == end;
      }
    }
    if (!ok) throw IoError(path.string() + ": malformed row " + std::to_string(row));
    out.push_back(e);
  }
  return out;
}

std::string summary_json(const CalibReport& report) {
  json j;
  j["direction"] = to_string(report.direction);
  j["seed"] = report.seed;
  j["final_mse"] = report.final_mse;
  j["seconds"] = report.seconds;
  j["eval_paths"] = report.eval_paths;
  j["epochs"] = report.epochs.size();
  j["instruments"] = json::array();
  for (const auto& r : report.instruments) j["instruments"].push_back(to_json(r));
  j["exotic"] = report.exotic ? to_json(*report.exotic) : json(nullptr);
  j["auglag"] = json::array();
  for (const auto& [lambda, c] : report.auglag) j["auglag"].push_back({{"lambda", lambda}, {"c", c}});
  return j.dump(2) + "\n";
}

CalibReport parse_summary(const std::string& text) {
  try {
    const json j = json::parse(text);
    CalibReport r;
    r.direction = parse_direction(j.at("direction").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.final_mse = j.at("final_mse").get<double>();
    r.seconds = j.at("seconds").get<double>();
    r.eval_paths = j.at("eval_paths").get<std::uint64_t>();
    for (const auto& i : j.at("instruments")) r.instruments.push_back(from_json(i));
    if (!j.at("exotic").is_null()) r.exotic = from_json(j.at("exotic"));
    for (const auto& a : j.at("auglag")) r.auglag.emplace_back(a.at("lambda").get<double>(), a.at("c").get<double>());
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed summary: ") + e.what());
  }
}

void write_summary(const std::filesystem::path& path, const CalibReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << summary_json(report);
  if (!out) throw IoError("write failed: " + path.string());
}

CalibReport read_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_summary(ss.str());
}

}  // namespace nsde::calibrate
