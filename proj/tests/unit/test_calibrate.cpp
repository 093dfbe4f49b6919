#include <cmath>
#include <filesystem>
#include <random>

#include "calibrate/adam.hpp"
#include "calibrate/auglag.hpp"
#include "calibrate/gradients.hpp"
#include "calibrate/report.hpp"
#include "calibrate/trainer.hpp"
#include "doctest.h"
#include "market/surface.hpp"

using namespace nsde;
using ad::Matrix;

namespace {

struct Toy {
  ad::ParamStore theta, xi;
  sde::NeuralSde model;
  hedge::HedgeNet hedge;
  calibrate::CalibTask task;

  Toy(std::vector<double> maturities, bool exotic, std::vector<int> hidden = {8, 8})
      : model(theta, [&] {
          sde::ModelConfig c;
          c.maturities = maturities;
          c.hidden = hidden;
          c.seed = 5;
          c.final_layer_scale = 1.0;
          return c;
        }()),
        hedge(xi, sde::ModelKind::lv, maturities.back(), count(maturities, exotic)) {
    task.grid = sde::TimeGrid::uniform(maturities.back(), 48);
    for (double t : maturities)
      for (double k : {0.95, 1.0, 1.05}) {
        task.vanillas.push_back(market::OptionSpec::call(t, k));
        task.targets.push_back(0.04 + 0.1 * t - 0.3 * (k - 1.0));
      }
    if (exotic) task.exotic = market::OptionSpec::lookback(maturities.back());
  }

  static std::size_t count(const std::vector<double>& m, bool exotic) { return 3 * m.size() + (exotic ? 1 : 0); }
};

double relative_error(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
    const bool ha = i < a.size() && a[i].size() > 0;
    const bool hb = i < b.size() && b[i].size() > 0;
    if (ha && hb) num += (a[i] - b[i]).squaredNorm();
    else if (ha) num += a[i].squaredNorm();
    else if (hb) num += b[i].squaredNorm();
    if (hb) den += b[i].squaredNorm();
  }
  return std::sqrt(num / den);
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "nsde_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("adam") {
  ad::ParamStore store;
  const auto a = store.add("a", Matrix::Constant(1, 1, 0.3));
  calibrate::AdamState s(store, {});
  calibrate::adam_step(store, s);
  CHECK(store.value(a)(0, 0) == 0.3);

  calibrate::AdamState fresh(store, {});
  store.grad(a)(0, 0) = 0.5;
  calibrate::adam_step(store, fresh);
  CHECK(std::abs(0.3 - store.value(a)(0, 0)) == doctest::Approx(1e-3).epsilon(1e-6));

  ad::ParamStore other;
  const auto b = other.add("b", Matrix::Constant(1, 1, 0.3));
  calibrate::AdamState t(other, {});
  other.grad(b)(0, 0) = -3e-7;
  calibrate::adam_step(other, t);
  CHECK(other.value(b)(0, 0) - 0.3 == doctest::Approx(1e-3 * 3e-7 / (3e-7 + 1e-8)).epsilon(1e-6));

  other.grad(b)(0, 0) = std::nan("");
  CHECK_THROWS_AS(calibrate::adam_step(other, t), NumericError);

  CHECK(calibrate::scheduled_lr(1e-3, 199, 200) == 1e-3);
  CHECK(calibrate::scheduled_lr(1e-3, 400, 200) == 2.5e-4);
  CHECK(calibrate::scheduled_lr(1e-3, 400, 0) == 1e-3);
}

TEST_CASE("augmented lagrangian updates") {
  auto s = calibrate::auglag_update({1.0, 2.0, 0}, 0.5);
  CHECK(s.lambda == 2.0);
  CHECK(s.c == 4.0);
  s = calibrate::auglag_update(s, 0.0);
  CHECK(s.lambda == 2.0);
  CHECK(s.c == 8.0);
  calibrate::AugLagState z{1.0, 1.0, 0};
  for (int i = 0; i < 10; ++i) {
    const double before = z.lambda;
    z = calibrate::auglag_update(z, 0.0);
    CHECK(z.lambda >= before);
  }
  CHECK(z.c == 1024.0);
  CHECK(z.updates == 10);
  CHECK_THROWS_AS(calibrate::auglag_update(z, -1e-9), NumericError);
}

TEST_CASE("bound directions") {
  CHECK(calibrate::parse_direction("lower") == calibrate::BoundDirection::lower);
  CHECK(calibrate::to_string(calibrate::BoundDirection::upper) == "upper");
  CHECK_THROWS_AS(calibrate::parse_direction("sideways"), ConfigError);
}

TEST_CASE("chunked, recomputed and single-chunk gradients agree") {
  Toy toy({0.25}, true);
  calibrate::TrainConfig tc;
  tc.layout = {512, true, 64};
  auto grad = [&](std::size_t chunk, std::size_t budget) {
    calibrate::TrainConfig c = tc;
    c.layout.chunk_paths = chunk;
    c.memory_budget_mb = budget;
    calibrate::Trainer tr(toy.model, toy.theta, toy.hedge, toy.xi, toy.task, c);
    toy.theta.zero_grad();
    toy.xi.zero_grad();
    calibrate::Batch b = tr.evaluate(3, c.layout, true, true);
    Matrix w = Matrix::Ones(1, static_cast<Eigen::Index>(tr.columns()));
    tr.backprop_theta(b, w);
    std::vector<std::size_t> cols(tr.columns());
    for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j;
    tr.backprop_xi(b, cols);
    return std::make_pair(toy.theta.flat_grads(), toy.xi.flat_grads());
  };
  const auto kept = grad(64, 2000);
  const auto recomputed = grad(64, 0);
  CHECK(kept.first == recomputed.first);
  CHECK(kept.second == recomputed.second);
  const auto whole = grad(256, 2000);
  for (std::size_t i = 0; i < kept.first.size(); ++i)
    CHECK(kept.first[i] == doctest::Approx(whole.first[i]).epsilon(1e-9).scale(1e-12));
}

TEST_CASE("randomised gradient averaged over segments equals the full gradient") {
  Toy toy({0.25, 0.5}, false);
  calibrate::TrainConfig tc;
  tc.layout = {256, true, 128};
  tc.use_hedge = false;
  calibrate::Trainer tr(toy.model, toy.theta, toy.hedge, toy.xi, toy.task, tc);
  const calibrate::GradientStreams streams{1, 2};
  const auto full = calibrate::mse_gradient(tr, toy.model, toy.theta, streams);
  const auto g0 = calibrate::randomized_gradient(tr, toy.model, toy.theta, streams, 0);
  const auto g1 = calibrate::randomized_gradient(tr, toy.model, toy.theta, streams, 1);
  std::vector<Matrix> avg(full.size());
  for (std::size_t i = 0; i < full.size(); ++i) avg[i] = 0.5 * (g0[i] + g1[i]);
  CHECK(relative_error(avg, full) <= 1e-10);
  for (std::size_t i = 0; i < toy.theta.size(); ++i) CHECK_FALSE(toy.theta.frozen(ad::ParamId{i}));
  CHECK_THROWS_AS(calibrate::randomized_gradient(tr, toy.model, toy.theta, streams, 2), ConfigError);

  // segment 1 cannot move prices at the first maturity: its share of the
  // full gradient comes from the second maturity only
  for (auto id : toy.model.segment_params(0)) CHECK(g1[id.index].isZero(0.0));

  // empirical mean over random draws of the segment index
  std::mt19937_64 rng(9);
  std::vector<Moments> est(toy.theta.element_count());
  for (int draw = 0; draw < 10000; ++draw) {
    const auto& g = (rng() & 1) ? g1 : g0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
      for (Eigen::Index e = 0; e < g[i].size(); ++e) est[j++].add(g[i].data()[e]);
  }
  std::size_t j = 0;
  for (std::size_t i = 0; i < full.size(); ++i)
    for (Eigen::Index e = 0; e < full[i].size(); ++e, ++j)
      CHECK(std::abs(est[j].mean - full[i].data()[e]) <= 3.0 * est[j].stderr_of_mean() + 1e-15);
}

TEST_CASE("one segment: randomised gradient is the full gradient") {
  Toy toy({0.25}, false);
  calibrate::TrainConfig tc;
  tc.layout = {128, true, 128};
  tc.use_hedge = false;
  calibrate::Trainer tr(toy.model, toy.theta, toy.hedge, toy.xi, toy.task, tc);
  const auto full = calibrate::mse_gradient(tr, toy.model, toy.theta, {4, 4});
  const auto r = calibrate::randomized_gradient(tr, toy.model, toy.theta, {4, 4}, 0);
  CHECK(relative_error(r, full) == 0.0);
}

TEST_CASE("training is deterministic and direction none ignores multipliers" * doctest::test_suite("properties")) {
  auto run = [](double lambda0, double c0) {
    Toy toy({0.25}, true);
    calibrate::TrainConfig tc;
    tc.epochs = 3;
    tc.layout = {256, true, 128};
    tc.lambda0 = lambda0;
    tc.c0 = c0;
    const auto hist = calibrate::train(toy.model, toy.theta, toy.hedge, toy.xi, toy.task, tc);
    return std::make_tuple(toy.theta.flat_values(), toy.xi.flat_values(), hist.back().mse);
  };
  const auto a = run(1.0, 1.0);
  const auto b = run(1.0, 1.0);
  const auto c = run(7.0, 0.5);
  CHECK(std::get<0>(a) == std::get<0>(b));
  CHECK(std::get<1>(a) == std::get<1>(b));
  CHECK(std::get<0>(a) == std::get<0>(c));
  CHECK(std::get<2>(a) == std::get<2>(c));
}

TEST_CASE("bounds move the exotic in the requested direction") {
  auto run = [](calibrate::BoundDirection d) {
    Toy toy({0.25}, true);
    calibrate::TrainConfig tc;
    tc.epochs = 30;
    tc.layout = {512, true, 256};
    tc.direction = d;
    tc.lr_theta = 1e-2;
    tc.auglag_every = 10;
    tc.lambda0 = 1.0;
    calibrate::AugLagState al{tc.lambda0, tc.c0, 0};
    const auto hist = calibrate::train(toy.model, toy.theta, toy.hedge, toy.xi, toy.task, tc, &al);
    if (d != calibrate::BoundDirection::none) CHECK(al.updates == 3);
    return hist.back().exotic_price;
  };
  const double lo = run(calibrate::BoundDirection::lower);
  const double none = run(calibrate::BoundDirection::none);
  const double hi = run(calibrate::BoundDirection::upper);
  CHECK(lo < none);
  CHECK(none < hi);

  Toy plain({0.25}, false);
  calibrate::TrainConfig tc;
  tc.direction = calibrate::BoundDirection::lower;
  CHECK_THROWS_AS(calibrate::train(plain.model, plain.theta, plain.hedge, plain.xi, plain.task, tc), ConfigError);
}

TEST_CASE("self-generated targets give noise-level error") {
  Toy toy({0.25}, false);
  const auto truth = calibrate::evaluate_report(toy.model, toy.theta, toy.hedge, toy.xi, toy.task,
                                                {200000, true, 4096}, 77, false);
  double worst_se = 0.0;
  for (std::size_t j = 0; j < toy.task.vanillas.size(); ++j) {
    toy.task.targets[j] = truth.instruments[j].price.mean;
    worst_se = std::max(worst_se, truth.instruments[j].price.std_error);
  }
  calibrate::TrainConfig tc;
  tc.epochs = 1;
  tc.layout = {20000, true, 2048};
  tc.use_hedge = false;
  const auto hist = calibrate::train(toy.model, toy.theta, toy.hedge, toy.xi, toy.task, tc);
  const double train_se = worst_se * std::sqrt(200000.0 / 20000.0);
  CHECK(hist[0].mse <= 9.0 * (train_se * train_se + worst_se * worst_se));
}

TEST_CASE("incremental training freezes earlier segments") {
  Toy toy({0.25, 0.5}, false);
  toy.task.grid = sde::TimeGrid::uniform(0.5, 48);
  calibrate::TrainConfig tc;
  tc.epochs = 2;
  tc.layout = {256, true, 128};
  auto snapshot = [&](std::size_t seg) {
    std::vector<Matrix> out;
    for (auto id : toy.model.segment_params(seg)) out.push_back(toy.theta.value(id));
    return out;
  };
  const auto seg1_initial = snapshot(1);
  std::vector<Matrix> seg0_after_stage0;
  int count = 0;
  const auto stages = calibrate::incremental_multi_maturity(
      toy.model, toy.theta, toy.hedge, toy.xi, toy.task, tc, [&](const calibrate::EpochRecord&) {
        ++count;
        if (count <= 2) CHECK(snapshot(1) == seg1_initial);
        if (count == 2) seg0_after_stage0 = snapshot(0);
        if (count > 2) CHECK(snapshot(0) == seg0_after_stage0);
      });
  CHECK(stages.size() == 2);
  CHECK(count == 4);
  CHECK(snapshot(1) != seg1_initial);

  tc.direction = calibrate::BoundDirection::upper;
  CHECK_THROWS_AS(calibrate::incremental_multi_maturity(toy.model, toy.theta, toy.hedge, toy.xi, toy.task, tc),
                  ConfigError);
}

TEST_CASE("bias diagnostic: constant payoff gives zero on both sides") {
  Toy toy({0.25}, false);
  ad::ParamStore xi;
  hedge::HedgeNet one(xi, sde::ModelKind::lv, 0.25, 1, {{4}, 1, 0.1});
  calibrate::CalibTask task;
  task.grid = sde::TimeGrid::uniform(0.25, 24);
  task.vanillas = {market::OptionSpec::put(0.25, 1e-3)};
  task.targets = {0.01};
  calibrate::BiasConfig bc;
  bc.batch_paths = 16;
  bc.batches = 10;
  bc.reference_paths = 1000;
  const auto rep = calibrate::bias_diagnostic(toy.model, toy.theta, one, xi, task, bc, 1, false);
  CHECK(rep.holds());
  for (const auto& c : rep.components) {
    CHECK(c.bias == 0.0);
    CHECK(c.bound == 0.0);
  }
}

TEST_CASE("report files round trip" * doctest::test_suite("properties")) {
  std::vector<calibrate::EpochRecord> epochs = {{0, 1.0 / 3.0, 0.1234567890123, 0, 0}, {1, 2.5e-9, 0.17, 0, 0}};
  const auto csv = temp_file("epochs.csv");
  calibrate::write_epochs(csv, epochs);
  const auto back = calibrate::read_epochs(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].mse == epochs[0].mse);
  CHECK(back[1].exotic_price == epochs[1].exotic_price);

  calibrate::CalibReport r;
  r.direction = calibrate::BoundDirection::upper;
  r.seed = 12;
  r.final_mse = 3.3e-7;
  r.eval_paths = 400000;
  calibrate::InstrumentResult i;
  i.spec = market::OptionSpec::call(2.0 / 12, 0.92);
  i.target = 0.1;
  i.price = {0.1000000001, 1e-5};
  i.model_iv = 0.2012345678901234;
  r.instruments.push_back(i);
  calibrate::InstrumentResult e;
  e.spec = market::OptionSpec::lookback(1.0);
  e.price = {0.174, 2e-4};
  r.exotic = e;
  r.auglag = {{2.0, 4.0}};
  const auto json = temp_file("summary.json");
  calibrate::write_summary(json, r);
  const auto s = calibrate::read_summary(json);
  CHECK(s.direction == r.direction);
  CHECK(s.instruments[0].price.mean == i.price.mean);
  CHECK(*s.instruments[0].model_iv == *i.model_iv);
  CHECK_FALSE(s.instruments[0].target_iv.has_value());
  CHECK(s.exotic->spec.kind == market::OptionKind::lookback_call);
  CHECK(s.auglag[0].second == 4.0);
  CHECK(calibrate::summary_json(s) == calibrate::summary_json(r));
  CHECK_THROWS_AS(calibrate::parse_summary("{\"direction\": 3}"), IoError);
}
