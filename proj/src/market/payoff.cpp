#include "market/payoff.hpp"

#include <cmath>

#include "market/surface.hpp"

namespace nsde::market {

std::string to_string(OptionKind k) {
  switch (k) {
    case OptionKind::european_call: return "call";
    case OptionKind::european_put: return "put";
    case OptionKind::lookback_call: return "lookback";
  }
  return "call";
}

OptionKind parse_option_kind(const std::string& s) {
  if (s == "call") return OptionKind::european_call;
  if (s == "put") return OptionKind::european_put;
  if (s == "lookback") return OptionKind::lookback_call;
  throw ConfigError("unknown instrument kind '" + s + "'");
}

void OptionSpec::validate() const {
  if (!(maturity > 0.0)) throw ConfigError("option maturity must be positive");
  if (kind != OptionKind::lookback_call && !(strike > 0.0)) throw ConfigError("option strike must be positive");
}

std::string OptionSpec::label() const {
  switch (kind) {
    case OptionKind::european_call: return "call(T=" + format_double(maturity) + ",K=" + format_double(strike) + ")";
    case OptionKind::european_put: return "put(T=" + format_double(maturity) + ",K=" + format_double(strike) + ")";
    case OptionKind::lookback_call: return "lookback(T=" + format_double(maturity) + ")";
  }
  return "?";
}

ad::DiffArray payoff(const OptionSpec& spec, const sde::PathChunk& paths, const sde::TimeGrid& grid,
                     double rate) {
  spec.validate();
  const std::size_t k = grid.index_of(spec.maturity);
  if (k >= paths.s.size()) throw ConfigError("payoff: paths end before maturity " + format_double(spec.maturity));
  const double df = std::exp(-rate * spec.maturity);
  const ad::DiffArray& st = paths.s[k];
  switch (spec.kind) {
    case OptionKind::european_call:
      return ad::scale(ad::relu(ad::add_scalar(st, -spec.strike)), df);
    case OptionKind::european_put:
      return ad::scale(ad::relu(ad::add_scalar(ad::scale(st, -1.0), spec.strike)), df);
    case OptionKind::lookback_call: {
      const std::span<const ad::DiffArray> upto(paths.s.data(), k + 1);
      return ad::scale(ad::sub(ad::running_max(upto), st), df);
    }
  }
  throw ConfigError("payoff: unknown option kind");
}

ad::DiffArray payoffs(const std::vector<OptionSpec>& specs, const sde::PathChunk& paths,
                      const sde::TimeGrid& grid, double rate) {
  if (specs.empty()) throw ConfigError("payoffs: no options");
  std::vector<ad::DiffArray> cols;
  cols.reserve(specs.size());
  for (const auto& s : specs) cols.push_back(payoff(s, paths, grid, rate));
  return ad::concat_cols(cols);
}

}  // namespace nsde::market
