#include <filesystem>
#include <fstream>
#include <random>

#include "app/checkpoint.hpp"
#include "app/commands.hpp"
#include "app/config.hpp"
#include "calibrate/trainer.hpp"
#include "common/errors.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace nsde;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "nsde_unit" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::unique_ptr<app::Session> small_session(sde::ModelKind kind) {
  sde::ModelConfig mc;
  mc.kind = kind;
  mc.maturities = {0.25, 0.5};
  mc.hidden = {8, 8};
  mc.seed = 3;
  hedge::HedgeConfig hc;
  hc.hidden = {6};
  std::vector<market::OptionSpec> inst = {market::OptionSpec::call(0.25, 1.0), market::OptionSpec::put(0.5, 0.95),
                                          market::OptionSpec::lookback(0.5)};
  auto s = app::make_session(mc, hc, inst, 48);
  // move away from the deterministic initialisation so the round trip is not trivial
  std::mt19937_64 rng(11);
  for (auto* store : {&s->theta, &s->xi})
    for (std::size_t i = 0; i < store->size(); ++i) {
      auto& m = store->value(ad::ParamId{i});
      m += 0.05 * testing::random_matrix(rng, m.rows(), m.cols());
    }
  return s;
}

calibrate::CalibReport price_all(app::Session& s) {
  calibrate::CalibTask task;
  task.grid = sde::TimeGrid::uniform(0.5, s.steps_per_year);
  for (const auto& o : s.instruments)
    if (o.kind == market::OptionKind::lookback_call) task.exotic = o;
    else {
      task.vanillas.push_back(o);
      task.targets.push_back(0.0);
    }
  return calibrate::evaluate_report(*s.model, s.theta, *s.hedge, s.xi, task, {512, true, 128}, 4, true);
}

}  // namespace

TEST_CASE("config keys, fractions and overrides") {
  app::AppConfig c;
  CHECK(app::parse_number("2/12") == 2.0 / 12.0);
  CHECK(app::parse_number("1e-3") == 1e-3);
  CHECK_THROWS_AS(app::parse_number("1/0"), ConfigError);
  CHECK_THROWS_AS(app::parse_number("abc"), ConfigError);
  CHECK(app::parse_int_list("50,50, 50") == std::vector<int>{50, 50, 50});
  CHECK(app::format_int_list({20, 20}) == "20,20");

  app::apply_override(c, "calibrate.epochs=7");
  CHECK(c.calibrate.train.epochs == 7);
  CHECK(c.get("calibrate.epochs") == "7");
  CHECK_THROWS_AS(app::apply_override(c, "calibrate.epoch=7"), ConfigError);
  CHECK_THROWS_AS(app::apply_override(c, "calibrate.epochs"), ConfigError);
  CHECK_THROWS_AS(c.set("calibrate.direction", "sideways"), ConfigError);

  for (const auto& k : app::AppConfig::keys()) CHECK_NOTHROW(c.get(k));
}

TEST_CASE("config dump parses back to the same configuration") {
  app::AppConfig c;
  c.set("run.seed", "42");
  c.set("market.rate", "0.03");
  c.set("model.hidden", "16,16");
  c.set("calibrate.direction", "upper");
  const auto back = app::parse_config(c.dump());
  CHECK(back.dump() == c.dump());
  CHECK(back.fingerprint() == c.fingerprint());
  app::AppConfig other = c;
  other.set("run.seed", "43");
  CHECK(other.fingerprint() != c.fingerprint());
  CHECK_THROWS_AS(app::parse_config("[calibrate]\nbogus = 1\n"), ConfigError);
}

TEST_CASE("config validation rejects inconsistent settings") {
  app::AppConfig c;
  CHECK_NOTHROW(c.validate());
  c.set("calibrate.train_paths", "0");
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("sha256 known answer") {
  CHECK(app::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("checkpoint round trip is bit-exact" * doctest::test_suite("properties")) {
  for (auto kind : {sde::ModelKind::lv, sde::ModelKind::lsv}) {
    auto s = small_session(kind);
    const auto text = app::checkpoint_text(*s);
    const auto dir = temp_dir("checkpoint");
    app::save_checkpoint(dir / "checkpoint.txt", *s);
    auto back = app::load_checkpoint(dir / "checkpoint.txt");
    CHECK(app::checkpoint_text(*back) == text);
    REQUIRE(back->theta.size() == s->theta.size());
    REQUIRE(back->xi.size() == s->xi.size());
    for (std::size_t i = 0; i < s->theta.size(); ++i)
      CHECK((back->theta.value(ad::ParamId{i}).array() == s->theta.value(ad::ParamId{i}).array()).all());
    for (std::size_t i = 0; i < s->xi.size(); ++i)
      CHECK((back->xi.value(ad::ParamId{i}).array() == s->xi.value(ad::ParamId{i}).array()).all());

    const auto a = price_all(*s);
    const auto b = price_all(*back);
    for (std::size_t j = 0; j < a.instruments.size(); ++j)
      CHECK(a.instruments[j].price.mean == b.instruments[j].price.mean);
    CHECK(a.exotic->price.mean == b.exotic->price.mean);
  }
}

TEST_CASE("checkpoint errors") {
  CHECK_THROWS_AS(app::parse_checkpoint("not a checkpoint\n"), IoError);
  auto s = small_session(sde::ModelKind::lv);
  auto text = app::checkpoint_text(*s);
  const auto pos = text.find("model.hidden 8,8");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 16, "model.hidden 8,9");
  CHECK_THROWS_AS(app::parse_checkpoint(text), ConfigError);
  CHECK_THROWS_AS(app::load_checkpoint("/nonexistent/checkpoint.txt"), IoError);
}

TEST_CASE("hedge outputs are matched by instrument") {
  auto s = small_session(sde::ModelKind::lv);
  CHECK(s->hedge_output(market::OptionSpec::call(0.25, 1.0)) == 0u);
  CHECK(s->hedge_output(market::OptionSpec::lookback(0.5)) == 2u);
  CHECK_FALSE(s->hedge_output(market::OptionSpec::call(0.25, 1.05)).has_value());
}

TEST_CASE("manifest round trip") {
  app::Manifest m;
  m.command = "calibrate";
  m.version = app::version();
  m.seed = 12345678901234ull;
  m.config = "[run]\nseed = 1\n";
  m.config_fingerprint = app::sha256_hex(m.config);
  m.check = "abc";
  m.inputs = {{"/data/surface.csv", "00"}};
  m.artifacts = {{"checkpoint.txt", "11"}, {"epochs.csv", "22"}};
  m.arguments = {{"direction", "lower"}};
  const auto dir = temp_dir("manifest");
  app::write_manifest(dir, m);
  const auto back = app::read_manifest(dir);
  CHECK(back.command == m.command);
  CHECK(back.seed == m.seed);
  CHECK(back.config == m.config);
  CHECK(back.config_fingerprint == m.config_fingerprint);
  CHECK(back.check == m.check);
  REQUIRE(back.artifacts.size() == 2);
  CHECK(back.artifacts[1].path == "epochs.csv");
  CHECK(back.inputs[0].sha256 == "00");
  CHECK(back.arguments == m.arguments);
  CHECK_THROWS_AS(app::read_manifest(temp_dir("empty")), IoError);
}

TEST_CASE("linear quantiles") {
  CHECK(app::quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(app::quantile({3.0, 1.0, 2.0}, 0.25) == 1.5);
  CHECK(app::quantile({3.0, 1.0, 2.0}, 0.0) == 1.0);
  CHECK(app::quantile({3.0, 1.0, 2.0}, 1.0) == 3.0);
  CHECK(app::quantile({5.0}, 0.75) == 5.0);
  CHECK_THROWS(app::quantile({}, 0.5));
}
