#include "market/surface.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "common/errors.hpp"

namespace nsde::market {

std::vector<double> MarketSurface::maturities() const {
  std::vector<double> out;
  for (const auto& q : quotes)
    if (std::find(out.begin(), out.end(), q.maturity) == out.end()) out.push_back(q.maturity);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Quote> MarketSurface::at(double maturity) const {
  std::vector<Quote> out;
  for (const auto& q : quotes)
    if (q.maturity == maturity) out.push_back(q);
  std::sort(out.begin(), out.end(), [](const Quote& a, const Quote& b) { return a.strike < b.strike; });
  return out;
}

std::vector<double> MarketSurface::strikes_at(double maturity) const {
  std::vector<double> out;
  for (const auto& q : at(maturity)) out.push_back(q.strike);
  return out;
}

std::vector<std::string> MarketSurface::monotonicity_warnings() const {
  std::vector<std::string> out;
  for (double t : maturities()) {
    const auto qs = at(t);
    for (std::size_t k = 1; k < qs.size(); ++k) {
      const double tol = 3.0 * std::hypot(qs[k].std_error, qs[k - 1].std_error);
      if (qs[k].price > qs[k - 1].price + tol)
        out.push_back("call price increases between strikes " + format_double(qs[k - 1].strike) + " and " +
                      format_double(qs[k].strike) + " at maturity " + format_double(t));
    }
  }
  return out;
}

std::vector<double> strike_preset(int count) {
  if (count != 11 && count != 21 && count != 31 && count != 41)
    throw ConfigError("strike preset must be one of 11, 21, 31, 41");
  const int half = (count - 1) / 2;
  std::vector<double> out;
  for (int i = -half; i <= half; ++i) out.push_back((100.0 + 2.0 * i) / 100.0);
  return out;
}

std::vector<double> bimonthly_maturities(int count) {
  if (count < 1 || count > 6) throw ConfigError("maturity count must be between 1 and 6");
  std::vector<double> out;
  for (int i = 1; i <= count; ++i) out.push_back(2.0 * i / 12.0);
  return out;
}

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, const std::string& where) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || !std::isfinite(v))
    throw IoError(where + ": cannot parse number '" + cell + "'");
  return v;
}

std::vector<std::vector<double>> read_table(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw IoError(path.string() + ": expected header '" + header + "', found '" + line + "'");
  const std::size_t width = split(header).size();
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    const std::string where = path.string() + " row " + std::to_string(lineno);
    if (cells.size() != width)
      throw IoError(where + ": expected " + std::to_string(width) + " columns, found " + std::to_string(cells.size()));
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_number(c, where));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path.string() + ": no data rows");
  return rows;
}

void open_out(std::ofstream& out, const std::filesystem::path& path) {
  out.open(path);
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

void write_surface(const std::filesystem::path& path, const MarketSurface& s) {
  std::ofstream out;
  open_out(out, path);
  out << "maturity,strike,price,stderr\n";
  for (const auto& q : s.quotes)
    out << format_double(q.maturity) << ',' << format_double(q.strike) << ',' << format_double(q.price) << ','
        << format_double(q.std_error) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

MarketSurface read_surface(const std::filesystem::path& path) {
  MarketSurface s;
  std::size_t row = 1;
  for (const auto& r : read_table(path, "maturity,strike,price,stderr")) {
    ++row;
    const std::string where = path.string() + " row " + std::to_string(row);
    if (!(r[0] > 0.0)) throw IoError(where + ": maturity must be positive");
    if (!(r[1] > 0.0)) throw IoError(where + ": strike must be positive");
    if (r[2] < 0.0) throw IoError(where + ": negative price " + format_double(r[2]));
    if (r[3] < 0.0) throw IoError(where + ": negative stderr");
    s.quotes.push_back({r[0], r[1], r[2], r[3]});
  }
  return s;
}

void write_lookback(const std::filesystem::path& path, const std::vector<LookbackQuote>& q) {
  std::ofstream out;
  open_out(out, path);
  out << "maturity,price,stderr\n";
  for (const auto& x : q)
    out << format_double(x.maturity) << ',' << format_double(x.price) << ',' << format_double(x.std_error) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<LookbackQuote> read_lookback(const std::filesystem::path& path) {
  std::vector<LookbackQuote> out;
  std::size_t row = 1;
  for (const auto& r : read_table(path, "maturity,price,stderr")) {
    ++row;
    if (r[1] < 0.0) throw IoError(path.string() + " row " + std::to_string(row) + ": negative price");
    out.push_back({r[0], r[1], r[2]});
  }
  return out;
}

}  // namespace nsde::market
