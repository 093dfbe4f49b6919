#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"

using namespace nsde;
using ad::DiffArray;
using ad::Matrix;
using testing::leaf;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

DiffArray reduce(const DiffArray& x) { return ad::sum_cols(ad::mean(x)); }

}  // namespace

TEST_CASE("affine small examples") {
  const DiffArray x = DiffArray::constant(mat({{1, 2}}));
  auto y = ad::affine(x, DiffArray::constant(mat({{1, 1}, {0, 1}})), DiffArray::constant(mat({{0, 0}})));
  CHECK(y.values()(0, 0) == 1.0);
  CHECK(y.values()(0, 1) == 3.0);

  std::mt19937_64 rng(1);
  const DiffArray xs = DiffArray::constant(testing::random_matrix(rng, 5, 3));
  auto zero = ad::affine(xs, DiffArray::constant(Matrix::Zero(3, 2)), DiffArray::constant(mat({{0.5, -1.5}})));
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(zero.values()(i, 0) == 0.5);
    CHECK(zero.values()(i, 1) == -1.5);
  }
  auto ident = ad::affine(xs, DiffArray::constant(Matrix::Identity(3, 3)), DiffArray::constant(Matrix::Zero(1, 3)));
  CHECK(ident.values() == xs.values());
  CHECK_THROWS_AS(ad::affine(xs, DiffArray::constant(Matrix::Zero(2, 2)), DiffArray::constant(Matrix::Zero(1, 2))),
                  ShapeError);
  CHECK_THROWS_AS(ad::affine(xs, DiffArray::constant(Matrix::Zero(3, 2)), DiffArray::constant(Matrix::Zero(1, 3))),
                  ShapeError);
}

TEST_CASE("elementwise closed forms") {
  CHECK(ad::softplus(DiffArray::scalar(0.0)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::abs(ad::softplus(DiffArray::scalar(50.0)).item() - 50.0) <= 1e-12);
  CHECK(ad::softplus(DiffArray::scalar(-800.0)).item() >= 0.0);
  CHECK(ad::relu(DiffArray::scalar(-3.0)).item() == 0.0);
  CHECK(ad::relu(DiffArray::scalar(2.0)).item() == 2.0);
  CHECK_THROWS_AS(ad::log(DiffArray::scalar(-1.0)), NumericError);
  CHECK_THROWS_AS(ad::sqrt(DiffArray::scalar(-1.0)), NumericError);
  CHECK_THROWS_AS(ad::exp(DiffArray::scalar(1000.0)), NumericError);
}

TEST_CASE("reductions") {
  CHECK(ad::mean(DiffArray::constant(mat({{1}, {2}, {3}}))).item() == 2.0);
  CHECK(ad::sample_variance(DiffArray::constant(Matrix::Constant(7, 2, 0.3))).values().isZero(0.0));
  CHECK(ad::sample_variance(DiffArray::constant(mat({{1}, {2}, {3}}))).item() == doctest::Approx(1.0));
  CHECK_THROWS_AS(ad::sample_variance(DiffArray::constant(mat({{1}}))), ShapeError);
  CHECK_THROWS_AS(ad::mean(DiffArray{}), ShapeError);
}

TEST_CASE("running max routes the adjoint to the first maximum") {
  ad::ParamStore store;
  const auto a = store.add("a", mat({{1.0, 5.0}}));
  const auto b = store.add("b", mat({{3.0, 5.0}}));
  const auto c = store.add("c", mat({{2.0, 5.0}}));
  ad::Tape tape;
  const DiffArray seq[] = {tape.param(store, a), tape.param(store, b), tape.param(store, c)};
  const DiffArray m = ad::running_max(seq);
  CHECK(m.values()(0, 0) == 3.0);
  tape.backward(ad::sum_cols(m));
  CHECK(store.grad(a)(0, 0) == 0.0);
  CHECK(store.grad(b)(0, 0) == 1.0);
  CHECK(store.grad(c)(0, 0) == 0.0);
  // three-way tie in column 1: first index wins
  CHECK(store.grad(a)(0, 1) == 1.0);
  CHECK(store.grad(b)(0, 1) == 0.0);
  CHECK(store.grad(c)(0, 1) == 0.0);
}

TEST_CASE("detach") {
  ad::ParamStore store;
  const auto id = store.add("x", mat({{0.3, -0.7}, {1.1, 2.0}}));
  ad::Tape tape;
  const DiffArray x = tape.param(store, id);
  const DiffArray d = ad::detach(x);
  CHECK_FALSE(d.attached());
  CHECK(d.values() == x.values());
  CHECK(ad::detach(d).values() == d.values());
  CHECK_FALSE(ad::detach(d).attached());

  // f(x) + g(detach(x)): only f contributes.
  const DiffArray f = ad::add(reduce(ad::mul(x, x)), reduce(ad::exp(d)));
  tape.backward(f);
  const Matrix expected = 2.0 * store.value(id) / 2.0;
  CHECK((store.grad(id) - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(tape.adjoint(d).isZero(0.0));
}

TEST_CASE("backward basics") {
  ad::ParamStore store;
  const auto t = store.add("theta", mat({{3.0}}));
  const auto u = store.add("unused", mat({{1.0}}));
  {
    ad::Tape tape;
    tape.backward(ad::mul(tape.param(store, t), tape.param(store, t)));
  }
  CHECK(store.grad(t)(0, 0) == 6.0);
  CHECK(store.grad(u)(0, 0) == 0.0);

  // additivity: a second pass accumulates
  {
    ad::Tape tape;
    tape.backward(ad::mul(tape.param(store, t), tape.param(store, t)));
  }
  CHECK(store.grad(t)(0, 0) == 12.0);
  store.zero_grad();
  CHECK(store.grad(t)(0, 0) == 0.0);

  {
    ad::Tape tape;
    const DiffArray x = tape.param(store, t);
    CHECK_THROWS_AS(tape.backward(DiffArray::scalar(1.0)), ShapeError);
    CHECK_THROWS_AS(tape.backward(ad::concat_cols(std::vector<DiffArray>{x, x})), ShapeError);
  }
  {
    ad::Tape tape;
    tape.backward(ad::add(ad::scale(tape.param(store, u), 0.0), DiffArray::scalar(2.0)));
    CHECK(store.grad(t)(0, 0) == 0.0);
  }
}

TEST_CASE("frozen parameters are constants") {
  ad::ParamStore store;
  const auto t = store.add("theta", mat({{3.0}}));
  store.set_frozen(t, true);
  ad::Tape tape;
  CHECK_FALSE(tape.param(store, t).attached());
}

TEST_CASE("sink and consume give the same gradient") {
  std::mt19937_64 rng(3);
  ad::ParamStore store;
  const auto w = store.add("W", testing::random_matrix(rng, 3, 4));
  const auto b = store.add("B", testing::random_matrix(rng, 1, 4));
  const Matrix xv = testing::random_matrix(rng, 6, 3);
  auto f = [&](ad::Tape* tape) {
    return reduce(ad::softplus(ad::affine(DiffArray::constant(xv), leaf(store, w, tape), leaf(store, b, tape))));
  };
  {
    ad::Tape tape;
    tape.backward(f(&tape));
  }
  std::vector<Matrix> sink;
  {
    ad::Tape tape;
    tape.backward(f(&tape), &sink, true);
    CHECK(tape.size() == 0);
  }
  CHECK(sink[w.index] == store.grad(w));
  CHECK(sink[b.index] == store.grad(b));
}

TEST_CASE("finite differences on every op" * doctest::test_suite("properties")) {
  std::mt19937_64 rng(11);
  ad::ParamStore store;
  const auto x = store.add("x", testing::random_matrix(rng, 4, 3));
  const auto y = store.add("y", testing::random_matrix(rng, 4, 3, 0.5, 1.5));
  const auto row = store.add("row", testing::random_matrix(rng, 1, 3));
  const auto col = store.add("col", testing::random_matrix(rng, 4, 1));
  const auto w = store.add("W", testing::random_matrix(rng, 3, 5));
  const auto bias = store.add("B", testing::random_matrix(rng, 1, 5));

  using F = std::function<DiffArray(ad::Tape*)>;
  const std::vector<std::pair<const char*, F>> cases = {
      {"affine", [&](ad::Tape* t) { return reduce(ad::affine(leaf(store, x, t), leaf(store, w, t), leaf(store, bias, t))); }},
      {"affine_relu", [&](ad::Tape* t) {
         return reduce(ad::affine_relu(leaf(store, x, t), leaf(store, w, t), leaf(store, bias, t)));
       }},
      {"mean relu affine", [&](ad::Tape* t) {
         return reduce(ad::relu(ad::affine(leaf(store, x, t), leaf(store, w, t), leaf(store, bias, t))));
       }},
      {"softplus", [&](ad::Tape* t) { return reduce(ad::softplus(ad::scale(leaf(store, x, t), 3.0))); }},
      {"exp", [&](ad::Tape* t) { return reduce(ad::exp(leaf(store, x, t))); }},
      {"log", [&](ad::Tape* t) { return reduce(ad::log(leaf(store, y, t))); }},
      {"sqrt", [&](ad::Tape* t) { return reduce(ad::sqrt(leaf(store, y, t))); }},
      {"abs", [&](ad::Tape* t) { return reduce(ad::abs(leaf(store, x, t))); }},
      {"tanh", [&](ad::Tape* t) { return reduce(ad::tanh(leaf(store, x, t))); }},
      {"add broadcast", [&](ad::Tape* t) {
         return reduce(ad::mul(ad::add(leaf(store, x, t), leaf(store, row, t)), ad::add(leaf(store, col, t), leaf(store, y, t))));
       }},
      {"sub", [&](ad::Tape* t) { return reduce(ad::exp(ad::sub(leaf(store, col, t), leaf(store, x, t)))); }},
      {"mul", [&](ad::Tape* t) { return reduce(ad::mul(leaf(store, x, t), leaf(store, y, t))); }},
      {"div", [&](ad::Tape* t) { return reduce(ad::div(leaf(store, x, t), leaf(store, y, t))); }},
      {"div broadcast", [&](ad::Tape* t) { return reduce(ad::div(leaf(store, row, t), leaf(store, y, t))); }},
      {"hypot", [&](ad::Tape* t) { return reduce(ad::hypot(leaf(store, x, t), leaf(store, y, t))); }},
      {"add_scalar", [&](ad::Tape* t) { return reduce(ad::log(ad::add_scalar(leaf(store, y, t), 0.25))); }},
      {"sum_rows", [&](ad::Tape* t) { return ad::sum_cols(ad::mul(ad::sum_rows(leaf(store, x, t)), leaf(store, row, t))); }},
      {"sum_cols", [&](ad::Tape* t) { return ad::sum_rows(ad::mul(ad::sum_cols(leaf(store, x, t)), leaf(store, col, t))); }},
      {"sample_variance", [&](ad::Tape* t) { return ad::sum_cols(ad::sample_variance(ad::mul(leaf(store, x, t), leaf(store, y, t)))); }},
      {"running_max", [&](ad::Tape* t) {
         const DiffArray seq[] = {leaf(store, x, t), leaf(store, y, t), ad::scale(leaf(store, x, t), -1.0)};
         return reduce(ad::running_max(seq));
       }},
      {"concat/column", [&](ad::Tape* t) {
         const DiffArray parts[] = {leaf(store, x, t), leaf(store, col, t)};
         const DiffArray c = ad::concat_cols(parts);
         return reduce(ad::mul(ad::column(c, 3), ad::column(c, 1)));
       }},
  };
  for (const auto& [name, f] : cases) {
    CAPTURE(name);
    CHECK(testing::fd_relative_error(store, f) <= 1e-5);
  }
}

TEST_CASE("non-finite outputs are rejected on the tape") {
  ad::ParamStore store;
  const auto a = store.add("a", mat({{0.0}}));
  ad::Tape tape;
  CHECK_THROWS_AS(ad::log(tape.param(store, a)), NumericError);
  CHECK_THROWS_AS(ad::div(DiffArray::scalar(1.0), tape.param(store, a)), NumericError);
}

TEST_CASE("replay is bit-identical" * doctest::test_suite("properties")) {
  std::mt19937_64 rng(5);
  ad::ParamStore store;
  const auto w = store.add("W", testing::random_matrix(rng, 3, 4));
  const auto b = store.add("B", testing::random_matrix(rng, 1, 4));
  const Matrix xv = testing::random_matrix(rng, 16, 3);
  auto run = [&] {
    store.zero_grad();
    ad::Tape tape;
    const DiffArray out = reduce(ad::softplus(ad::affine(DiffArray::constant(xv), tape.param(store, w), tape.param(store, b))));
    tape.backward(out);
    return std::make_pair(out.item(), store.flat_grads());
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}

TEST_CASE("param store") {
  ad::ParamStore store;
  const auto a = store.add("a", Matrix::Ones(2, 3));
  CHECK(store.grad(a).rows() == 2);
  CHECK(store.grad(a).cols() == 3);
  CHECK_THROWS_AS(store.add("a", Matrix::Ones(1, 1)), ConfigError);
  CHECK(store.find("a").has_value());
  CHECK_FALSE(store.find("b").has_value());
  std::vector<double> flat(6, 2.5);
  store.set_flat_values(flat);
  CHECK(store.value(a)(1, 2) == 2.5);
  CHECK_THROWS_AS(store.set_flat_values(std::vector<double>(5)), ShapeError);
}
