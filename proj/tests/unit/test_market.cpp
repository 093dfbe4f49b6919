#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <omp.h>

#include "doctest.h"
#include "market/black_scholes.hpp"
#include "market/heston.hpp"
#include "market/payoff.hpp"
#include "market/surface.hpp"
#include "sde/simulate.hpp"

using namespace nsde;
using ad::DiffArray;
using ad::Matrix;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "nsde_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

// Chunk holding explicit path values (rows x steps+1).
sde::PathChunk chunk_of(const Matrix& s) {
  sde::PathChunk c;
  for (Eigen::Index k = 0; k < s.cols(); ++k) c.s.push_back(DiffArray::constant(Matrix(s.col(k))));
  return c;
}

// Plain bisection used as an independent inversion oracle.
double bisect_vol(double price, double s0, double k, double r, double t) {
  double lo = 1e-4, hi = 5.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (market::bs_price(s0, k, r, t, mid) < price) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("black scholes prices and limits") {
  CHECK(market::bs_price(1, 1, 0.025, 1, 0.2) == doctest::Approx(0.09146).epsilon(1e-3));
  CHECK(market::bs_price(1, 0.9, 0.025, 1, 0.0) == doctest::Approx(1 - 0.9 * std::exp(-0.025)).epsilon(1e-15));
  CHECK(market::bs_price(1, 1.2, 0.025, 1, 0.0) == 0.0);
  CHECK(market::bs_price(1, 0.9, 0.025, 1, 1e-6) == doctest::Approx(1 - 0.9 * std::exp(-0.025)).epsilon(1e-12));
  double prev = 0.0;
  for (double v = 0.01; v < 3.0; v += 0.05) {
    const double p = market::bs_price(1, 1.05, 0.01, 0.5, v);
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("implied vol inversion" * doctest::test_suite("properties")) {
  const auto rt = market::implied_vol(market::bs_price(1, 1, 0.025, 1, 0.2), 1, 1, 0.025, 1);
  REQUIRE(rt.vol.has_value());
  CHECK(std::abs(*rt.vol - 0.2) <= 1e-8);

  const auto half = market::implied_vol(0.5, 1, 1, 0.0, 1);
  REQUIRE(half.vol.has_value());
  CHECK(std::abs(*half.vol - bisect_vol(0.5, 1, 1, 0, 1)) <= 1e-8);

  for (double k : {0.8, 0.95, 1.0, 1.1, 1.3})
    for (double v : {0.05, 0.2, 0.6}) {
      const double p = market::bs_price(1, k, 0.025, 0.5, v);
      if (p < 1e-9) continue;
      const auto r = market::implied_vol(p, 1, k, 0.025, 0.5);
      REQUIRE(r.vol.has_value());
      CHECK(std::abs(market::bs_price(1, k, 0.025, 0.5, *r.vol) - p) <= 1e-10);
    }

  const auto below = market::implied_vol(0.05, 1, 0.9, 0.025, 1);
  CHECK_FALSE(below.vol.has_value());
  CHECK(below.error == market::ImpliedVolError::below_intrinsic);
  const auto above = market::implied_vol(1.0, 1, 0.9, 0.025, 1);
  CHECK(above.error == market::ImpliedVolError::above_spot);
  CHECK(market::implied_vol(0.1, 1, 1, 0.025, -1).error == market::ImpliedVolError::invalid_input);
}

TEST_CASE("payoffs") {
  const auto grid = sde::TimeGrid({0.0, 0.5, 1.0});
  Matrix s(1, 3);
  s << 1.0, 0.9, 1.1;
  auto call = market::payoff(market::OptionSpec::call(1.0, 1.0), chunk_of(s), grid, 0.0);
  CHECK(call.item() == doctest::Approx(0.1).epsilon(1e-14));
  auto put = market::payoff(market::OptionSpec::put(0.5, 1.0), chunk_of(s), grid, 0.0);
  CHECK(put.item() == doctest::Approx(0.1).epsilon(1e-14));
  Matrix dec(1, 3);
  dec << 1.0, 0.9, 0.8;
  auto lb = market::payoff(market::OptionSpec::lookback(1.0), chunk_of(dec), grid, 0.0);
  CHECK(lb.item() == doctest::Approx(0.2).epsilon(1e-14));
  auto disc = market::payoff(market::OptionSpec::call(1.0, 1.0), chunk_of(s), grid, 0.05);
  CHECK(disc.item() == doctest::Approx(0.1 * std::exp(-0.05)).epsilon(1e-14));
  CHECK_THROWS_AS(market::payoff(market::OptionSpec::call(0.7, 1.0), chunk_of(s), grid, 0.0), ConfigError);
  CHECK_THROWS_AS(market::OptionSpec::call(1.0, -1.0).validate(), ConfigError);
  CHECK_THROWS_AS(market::OptionSpec::call(0.0, 1.0).validate(), ConfigError);

  // deep out of the money: zero payoff, zero gradient
  ad::ParamStore store;
  const auto id = store.add("s", Matrix::Constant(4, 1, 1.0));
  ad::Tape tape;
  sde::PathChunk c;
  c.s = {DiffArray::filled(4, 1, 1.0), tape.param(store, id)};
  const auto grid1 = sde::TimeGrid({0.0, 1.0});
  auto p = market::payoff(market::OptionSpec::call(1.0, 5.0), c, grid1, 0.0);
  CHECK(p.values().isZero(0.0));
  tape.backward(ad::sum_cols(ad::mean(p)));
  CHECK(store.grad(id).isZero(0.0));
}

TEST_CASE("lookback payoff is nonnegative path by path" * doctest::test_suite("properties")) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  Matrix s(200, 13);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    s(i, 0) = 1.0;
    for (Eigen::Index k = 1; k < s.cols(); ++k) s(i, k) = s(i, k - 1) * std::exp(0.1 * n(rng));
  }
  const auto grid = sde::TimeGrid::uniform(1.0, 12);
  auto lb = market::payoff(market::OptionSpec::lookback(1.0), chunk_of(s), grid, 0.03);
  CHECK(lb.values().minCoeff() >= 0.0);
}

TEST_CASE("heston surface: parity and monotonicity") {
  market::HestonRun run;
  run.paths = 100000;
  const auto mats = market::bimonthly_maturities(6);
  const auto strikes = market::strike_preset(21);
  const market::HestonParams p;
  const auto surf = market::heston_mc_surface(p, mats, strikes, run);
  REQUIRE(surf.calls.quotes.size() == 6 * 21);
  for (std::size_t i = 0; i < surf.calls.quotes.size(); ++i) {
    const auto& c = surf.calls.quotes[i];
    const auto& q = surf.puts.quotes[i];
    const double t = c.maturity;
    const auto m = static_cast<std::size_t>(i / 21);
    const double dev = std::abs(c.price - q.price - (p.x0 - c.strike * std::exp(-p.rate * t)));
    CHECK(dev <= 3.0 * surf.discounted_spot[m].std_error);
    CHECK(c.price >= 0.0);
  }
  CHECK(surf.calls.monotonicity_warnings().empty());
  CHECK(surf.calls.maturities() == mats);
  CHECK(surf.calls.strikes_at(mats[2]) == strikes);
}

TEST_CASE("heston determinism" * doctest::test_suite("properties")) {
  market::HestonRun run;
  run.paths = 2000;
  run.chunk_paths = 100;
  omp_set_num_threads(1);
  const auto a = market::heston_mc_surface({}, {0.5}, {1.0}, run);
  omp_set_num_threads(3);
  const auto b = market::heston_mc_surface({}, {0.5}, {1.0}, run);
  omp_set_num_threads(1);
  CHECK(a.calls.quotes[0].price == b.calls.quotes[0].price);
  run.chunk_paths = 333;
  const auto d = market::heston_mc_surface({}, {0.5}, {1.0}, run);
  CHECK(d.calls.quotes[0].price == doctest::Approx(a.calls.quotes[0].price).epsilon(1e-13));
  run.seed = 5;
  const auto c = market::heston_mc_surface({}, {0.5}, {1.0}, run);
  CHECK(a.calls.quotes[0].price != c.calls.quotes[0].price);
}

TEST_CASE("heston degenerate limits") {
  // eta = kappa = 0: Black-Scholes with vol sqrt(v0); a fine grid keeps the taming bias small
  market::HestonParams p;
  p.eta = 0.0;
  p.kappa = 0.0;
  market::HestonRun run;
  run.paths = 100000;
  run.steps_per_year = 4800;
  const auto s = market::heston_mc_surface(p, {1.0 / 12}, {1.0}, run);
  const double bs = market::bs_price(1, 1, 0.025, 1.0 / 12, 0.2);
  CHECK(std::abs(s.calls.quotes[0].price - bs) <= 3.0 * s.calls.quotes[0].std_error);

  // no volatility at all: the path increases deterministically
  market::HestonParams flat;
  flat.eta = 0.0;
  flat.v0 = 0.0;
  flat.kappa = 0.0;
  market::HestonRun small;
  small.paths = 1000;
  const auto lb = market::heston_mc_lookback(flat, {2.0 / 12, 0.5, 1.0}, small);
  for (const auto& e : lb) CHECK(e.mean == 0.0);

  market::HestonParams bad;
  bad.rho = 1.0;
  CHECK_THROWS_AS(market::heston_mc_lookback(bad, {1.0}, small), ConfigError);
  bad = {};
  bad.kappa = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("heston ATM call matches an independent Monte Carlo oracle") {
  const market::HestonParams p;
  market::HestonRun run;
  const auto surf = market::heston_mc_surface(p, {1.0}, {1.0}, run);
  const auto& q = surf.calls.quotes[0];

  // Same scheme, different generator: mt19937_64 with std::normal_distribution, 10^7 plain paths.
  std::mt19937_64 rng(20240101);
  std::normal_distribution<double> normal;
  const int steps = 96;
  const double dt = 1.0 / steps;
  const double sq = std::sqrt(dt);
  const double rho_c = std::sqrt(1.0 - p.rho * p.rho);
  Moments oracle;
  for (int i = 0; i < 10000000; ++i) {
    double s = p.x0, v = p.v0;
    for (int k = 0; k < steps; ++k) {
      const double dwv = sq * normal(rng);
      const double dws = p.rho * dwv + rho_c * sq * normal(rng);
      const double vp = std::sqrt(std::max(v, 0.0));
      const double bs = p.rate * s, bv = p.kappa * (p.mu - v);
      const double ss = vp * s, sv = p.eta * vp;
      const double df = 1.0 + std::sqrt(bs * bs + bv * bv) * sq;
      const double sf = 1.0 + std::sqrt(ss * ss + sv * sv) * sq;
      s += bs * dt / df + ss / sf * dws;
      v += bv * dt / df + sv / sf * dwv;
    }
    oracle.add(std::exp(-p.rate) * std::max(s - 1.0, 0.0));
  }
  const double se = std::hypot(q.std_error, oracle.stderr_of_mean());
  CHECK(std::abs(q.price - oracle.mean) <= 3.0 * se);
}

TEST_CASE("surface csv round trip and strict reading" * doctest::test_suite("properties")) {
  market::MarketSurface s;
  s.quotes = {{2.0 / 12, 0.9, 0.1234567890123456789, 1e-4}, {2.0 / 12, 1.1, 3.0e-7, 2.5e-5}, {1.0, 1.0, 0.1, 0.0}};
  const auto path = temp_file("surface.csv");
  market::write_surface(path, s);
  const auto back = market::read_surface(path);
  REQUIRE(back.quotes.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.quotes[i].maturity == s.quotes[i].maturity);
    CHECK(back.quotes[i].strike == s.quotes[i].strike);
    CHECK(back.quotes[i].price == s.quotes[i].price);
    CHECK(back.quotes[i].std_error == s.quotes[i].std_error);
  }

  write_text(path, "");
  CHECK_THROWS_AS(market::read_surface(path), IoError);
  write_text(path, "maturity,strike,price,stderr\n");
  CHECK_THROWS_AS(market::read_surface(path), IoError);
  write_text(path, "maturity,strike,price,stderr,extra\n1,1,0.1,0,3\n");
  CHECK_THROWS_AS(market::read_surface(path), IoError);
  write_text(path, "maturity,strike,price,stderr\n1,1,0.1,0\n1,1.1,-0.01,0\n");
  try {
    market::read_surface(path);
    FAIL("negative price accepted");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  write_text(path, "maturity,strike,price,stderr\n1,abc,0.1,0\n");
  CHECK_THROWS_AS(market::read_surface(path), IoError);
  CHECK_THROWS_AS(market::read_surface(temp_file("missing.csv")), IoError);
}

TEST_CASE("lookback csv round trip" * doctest::test_suite("properties")) {
  const std::vector<market::LookbackQuote> q = {{2.0 / 12, 0.0581234567, 1e-4}, {1.0, 0.17400000000000001, 2e-4}};
  const auto path = temp_file("lookback.csv");
  market::write_lookback(path, q);
  const auto back = market::read_lookback(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].price == q[1].price);
  CHECK(back[0].maturity == q[0].maturity);
}

TEST_CASE("grid presets") {
  const auto k11 = market::strike_preset(11);
  REQUIRE(k11.size() == 11);
  CHECK(k11.front() == doctest::Approx(0.9));
  CHECK(k11[1] == 0.92);
  CHECK(k11.back() == doctest::Approx(1.1));
  CHECK(market::strike_preset(41).front() == doctest::Approx(0.6));
  CHECK(market::strike_preset(21).back() == doctest::Approx(1.2));
  CHECK_THROWS_AS(market::strike_preset(12), ConfigError);
  CHECK(market::bimonthly_maturities(6).back() == 1.0);
  CHECK(market::format_double(0.1) == "0.1");
}

TEST_CASE("monotonicity warnings") {
  market::MarketSurface s;
  s.quotes = {{1.0, 0.9, 0.10, 1e-4}, {1.0, 1.0, 0.12, 1e-4}};
  CHECK(s.monotonicity_warnings().size() == 1);
}
