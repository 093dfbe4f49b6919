#include <cmath>
#include <random>

#include "calibrate/adam.hpp"
#include "doctest.h"
#include "nets/mlp.hpp"
#include "support.hpp"

using namespace nsde;
using ad::DiffArray;
using ad::Matrix;

TEST_CASE("parameter count follows the layer formula") {
  // 2*50+50 + 3*(50*50+50) + 50+1
  CHECK(nets::mlp_parameter_count(std::vector<int>{2, 50, 50, 50, 50, 1}) == 7851);
  ad::ParamStore store;
  nets::Mlp net(store, "sigma", {2, 50, 50, 50, 50, 1}, nets::OutputTransform::softplus, 9);
  CHECK(net.parameter_count() == 7851);
  CHECK(store.element_count() == 7851);
  for (std::size_t k = 0; k < 5; ++k) {
    const auto w = store.find("sigma.W" + std::to_string(k + 1));
    REQUIRE(w.has_value());
    CHECK(store.value(*w).rows() == net.sizes()[k]);
    CHECK(store.value(*w).cols() == net.sizes()[k + 1]);
  }
  CHECK_THROWS_AS(nets::Mlp(store, "bad", {3}, nets::OutputTransform::identity, 1), ConfigError);
}

TEST_CASE("initialisation is deterministic and He-scaled with zero biases") {
  ad::ParamStore a, b, c;
  nets::Mlp na(a, "n", {3, 200, 1}, nets::OutputTransform::identity, 42);
  nets::Mlp nb(b, "n", {3, 200, 1}, nets::OutputTransform::identity, 42);
  nets::Mlp nc(c, "n", {3, 200, 1}, nets::OutputTransform::identity, 43);
  CHECK(a.flat_values() == b.flat_values());
  CHECK(a.flat_values() != c.flat_values());
  const Matrix& w2 = a.value(*a.find("n.W2"));
  const double var = w2.squaredNorm() / static_cast<double>(w2.size());
  CHECK(var == doctest::Approx(2.0 / 200.0).epsilon(0.3));
  CHECK(a.value(*a.find("n.B1")).isZero(0.0));
  CHECK(a.value(*a.find("n.B2")).isZero(0.0));
}

TEST_CASE("zero input propagates the final transform of zero biases") {
  ad::ParamStore store;
  nets::Mlp sp(store, "sp", {2, 8, 8, 1}, nets::OutputTransform::softplus, 0);
  nets::Mlp id(store, "id", {2, 8, 8, 1}, nets::OutputTransform::identity, 0);
  nets::Binder bind(store, nullptr);
  const DiffArray x = DiffArray::constant(Matrix::Zero(3, 2));
  CHECK(sp.forward(bind, x).values()(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(id.forward(bind, x).values()(2, 0) == 0.0);
}

TEST_CASE("constant network") {
  ad::ParamStore store;
  nets::Mlp net(store, "c", {3, 4, 2}, nets::OutputTransform::identity, 1);
  for (std::size_t i = 0; i < store.size(); ++i) store.value(ad::ParamId{i}).setZero();
  store.value(*store.find("c.B2")) << 0.7, -0.2;
  std::mt19937_64 rng(2);
  nets::Binder bind(store, nullptr);
  const DiffArray out = net.forward(bind, DiffArray::constant(testing::random_matrix(rng, 10, 3, -5, 5)));
  for (Eigen::Index i = 0; i < 10; ++i) {
    CHECK(out.values()(i, 0) == 0.7);
    CHECK(out.values()(i, 1) == -0.2);
  }
}

TEST_CASE("softplus output is positive") {
  ad::ParamStore store;
  nets::Mlp net(store, "p", {2, 16, 16, 1}, nets::OutputTransform::softplus, 5, {1.0, -3.0});
  std::mt19937_64 rng(3);
  nets::Binder bind(store, nullptr);
  const DiffArray out = net.forward(bind, DiffArray::constant(testing::random_matrix(rng, 1000, 2, -10, 10)));
  CHECK(out.values().minCoeff() > 0.0);
}

TEST_CASE("mlp gradient matches finite differences" * doctest::test_suite("properties")) {
  ad::ParamStore store;
  nets::Mlp net(store, "m", {3, 6, 5, 2}, nets::OutputTransform::softplus, 8, {1.0, 0.1});
  std::mt19937_64 rng(4);
  const Matrix x = testing::random_matrix(rng, 7, 3);
  auto f = [&](ad::Tape* tape) {
    nets::Binder bind(store, tape);
    return ad::sum_cols(ad::mean(net.forward(bind, DiffArray::constant(x))));
  };
  CHECK(testing::fd_relative_error(store, f) <= 1e-5);
}

TEST_CASE("segmented net selects segments and localises gradients") {
  ad::ParamStore store;
  nets::SegmentedNet net(store, "s", {0.5, 1.0}, {2, 8, 1}, nets::OutputTransform::softplus, 3);
  CHECK(net.segment_at(0.0) == 0);
  CHECK(net.segment_at(0.49) == 0);
  CHECK(net.segment_at(0.5) == 1);
  CHECK(net.segment_at(1.0) == 1);
  CHECK_THROWS_AS(net.segment_at(1.01), ConfigError);
  CHECK_THROWS_AS(net.segment_at(-0.01), ConfigError);
  CHECK(store.value(net.segment_params(0)[0]) != store.value(net.segment_params(1)[0]));

  ad::Tape tape;
  nets::Binder bind(store, &tape);
  const DiffArray x = DiffArray::constant(Matrix::Constant(4, 1, 1.1));
  tape.backward(ad::sum_cols(ad::mean(net.forward(bind, 0.25, x))));
  bool seg0 = false;
  for (auto id : net.segment_params(0)) seg0 = seg0 || !store.grad(id).isZero(0.0);
  CHECK(seg0);
  for (auto id : net.segment_params(1)) CHECK(store.grad(id).isZero(0.0));
}

TEST_CASE("frozen segments get no gradient and no optimizer update") {
  ad::ParamStore store;
  nets::SegmentedNet net(store, "s", {0.5, 1.0}, {2, 8, 1}, nets::OutputTransform::identity, 3);
  net.set_frozen(store, 1, true);
  const auto before = store.flat_values();
  calibrate::AdamState adam(store, {});
  {
    ad::Tape tape;
    nets::Binder bind(store, &tape);
    const DiffArray x = DiffArray::constant(Matrix::Constant(4, 1, 1.1));
    tape.backward(ad::sum_cols(ad::mean(ad::add(net.forward(bind, 0.75, x), net.forward(bind, 0.25, x)))));
  }
  for (auto id : net.segment_params(1)) CHECK(store.grad(id).isZero(0.0));
  // force a nonzero gradient on the frozen segment: adam must still skip it
  for (auto id : net.segment_params(1)) store.grad(id).setConstant(1.0);
  calibrate::adam_step(store, adam);
  std::size_t offset = 0;
  const auto after = store.flat_values();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ad::ParamId id{i};
    const auto n = static_cast<std::size_t>(store.value(id).size());
    bool frozen = store.frozen(id);
    bool same = std::equal(before.begin() + offset, before.begin() + offset + n, after.begin() + offset);
    CHECK(same == frozen);
    offset += n;
  }
}

TEST_CASE("weight clipping") {
  ad::ParamStore store;
  nets::Mlp net(store, "c", {2, 30, 1}, nets::OutputTransform::identity, 1);
  store.value(*store.find("c.B1")).setConstant(100.0);
  const auto ids = net.params();
  nets::clip_weights(store, ids, 0.5);
  CHECK(store.value(*store.find("c.W1")).norm() <= 0.5 + 1e-12);
  CHECK(store.value(*store.find("c.B1"))(0, 0) == 100.0);
}

TEST_CASE("output transform names") {
  CHECK(nets::parse_output_transform("softplus") == nets::OutputTransform::softplus);
  CHECK(nets::to_string(nets::OutputTransform::identity) == "identity");
  CHECK_THROWS_AS(nets::parse_output_transform("tanh"), ConfigError);
}
