#include "autodiff/ops.hpp"

#include <cmath>
#include <string>

namespace nsde::ad {
namespace {

using Index = Eigen::Index;

Tape* find_tape(std::span<const DiffArray> inputs) {
  for (const auto& in : inputs)
    if (in.attached()) return in.tape();
  return nullptr;
}

DiffArray emit(std::shared_ptr<const Matrix> value, std::span<const DiffArray> inputs,
               Tape::BackwardFn fn, const char* name) {
  Tape* tape = find_tape(inputs);
  if (tape == nullptr) {
    if (!all_finite(*value)) throw NumericError(std::string("non-finite output in op '") + name + "'");
    return DiffArray::constant(std::move(value));
  }
  return tape->record(std::move(value), inputs, std::move(fn), name);
}

DiffArray emit(Matrix value, std::span<const DiffArray> inputs, Tape::BackwardFn fn,
               const char* name) {
  return emit(std::make_shared<const Matrix>(std::move(value)), inputs, std::move(fn), name);
}

DiffArray emit1(Matrix value, const DiffArray& x, Tape::BackwardFn fn, const char* name) {
  const DiffArray in[] = {x};
  return emit(std::move(value), in, std::move(fn), name);
}

void require_nonempty(const DiffArray& x, const char* name) {
  if (x.empty() || x.rows() == 0 || x.cols() == 0)
    throw ShapeError(std::string(name) + ": empty input");
}

struct Shape {
  Index rows;
  Index cols;
};

Index broadcast_dim(Index a, Index b, const char* name) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ShapeError(std::string(name) + ": incompatible shapes");
}

Shape broadcast_shape(const DiffArray& a, const DiffArray& b, const char* name) {
  require_nonempty(a, name);
  require_nonempty(b, name);
  return {broadcast_dim(a.rows(), b.rows(), name), broadcast_dim(a.cols(), b.cols(), name)};
}

std::shared_ptr<const Matrix> expand(const DiffArray& x, Shape s) {
  const Matrix& m = x.values();
  if (m.rows() == s.rows && m.cols() == s.cols) return x.shared_values();
  return std::make_shared<const Matrix>(m.replicate(s.rows / m.rows(), s.cols / m.cols()));
}

// Sums a broadcast-shaped adjoint back onto an operand's own shape.
void accumulate_reduced(Matrix& target, const Matrix& grad) {
  if (target.rows() == grad.rows() && target.cols() == grad.cols()) {
    target += grad;
  } else if (target.rows() == 1 && target.cols() == 1) {
    target(0, 0) += grad.sum();
  } else if (target.rows() == 1) {
    target += grad.colwise().sum();
  } else {
    target += grad.rowwise().sum();
  }
}

template <class Value, class DerivA, class DerivB>
DiffArray binary(const DiffArray& a, const DiffArray& b, const char* name, Value value,
                 DerivA da, DerivB db) {
  const Shape s = broadcast_shape(a, b, name);
  auto av = expand(a, s);
  auto bv = expand(b, s);
  Matrix out = value(av->array(), bv->array());
  const DiffArray in[] = {a, b};
  return emit(
      std::move(out), in,
      [av, bv, da, db](const Matrix& g, std::span<Matrix* const> adj) {
        if (adj[0]) accumulate_reduced(*adj[0], da(g.array(), av->array(), bv->array()));
        if (adj[1]) accumulate_reduced(*adj[1], db(g.array(), av->array(), bv->array()));
      },
      name);
}

template <class Value, class Deriv>
DiffArray unary(const DiffArray& x, const char* name, Value value, Deriv deriv) {
  require_nonempty(x, name);
  auto xv = x.shared_values();
  auto out = std::make_shared<const Matrix>(value(xv->array()));
  const DiffArray in[] = {x};
  return emit(
      out, in,
      [xv, out, deriv](const Matrix& g, std::span<Matrix* const> adj) {
        if (adj[0]) *adj[0] += deriv(g.array(), xv->array(), out->array());
      },
      name);
}

// dst += x^T g, accumulated over row blocks: one product over a tall inner
// dimension is several times slower in Eigen than a sum of short ones.
void add_xt_g(Matrix& dst, const Matrix& x, const Matrix& g) {
  constexpr Eigen::Index block = 32;
  const Eigen::Index n = x.rows();
  for (Eigen::Index r = 0; r < n; r += block) {
    const Eigen::Index len = std::min(block, n - r);
    dst.noalias() += x.middleRows(r, len).transpose() * g.middleRows(r, len);
  }
}

}  // namespace

DiffArray affine(const DiffArray& x, const DiffArray& w, const DiffArray& b) {
  require_nonempty(x, "affine");
  require_nonempty(w, "affine");
  require_nonempty(b, "affine");
  if (x.cols() != w.rows()) throw ShapeError("affine: inner dimensions do not agree");
  if (b.rows() != 1 || b.cols() != w.cols()) throw ShapeError("affine: bias shape mismatch");
  auto xv = x.shared_values();
  auto wv = w.shared_values();
  Matrix out(x.rows(), w.cols());
  out.noalias() = *xv * *wv;
  out.rowwise() += b.values().row(0);
  const DiffArray in[] = {x, w, b};
  return emit(
      std::move(out), in,
      [xv, wv](const Matrix& g, std::span<Matrix* const> adj) {
        if (adj[0]) adj[0]->noalias() += g * wv->transpose();
        if (adj[1]) add_xt_g(*adj[1], *xv, g);
        if (adj[2]) *adj[2] += g.colwise().sum();
      },
      "affine");
}

DiffArray affine_relu(const DiffArray& x, const DiffArray& w, const DiffArray& b) {
  require_nonempty(x, "affine_relu");
  require_nonempty(w, "affine_relu");
  require_nonempty(b, "affine_relu");
  if (x.cols() != w.rows()) throw ShapeError("affine_relu: inner dimensions do not agree");
  if (b.rows() != 1 || b.cols() != w.cols()) throw ShapeError("affine_relu: bias shape mismatch");
  auto xv = x.shared_values();
  auto wv = w.shared_values();
  auto out = std::make_shared<Matrix>(x.rows(), w.cols());
  out->noalias() = *xv * *wv;
  out->rowwise() += b.values().row(0);
  *out = out->cwiseMax(0.0);
  std::shared_ptr<const Matrix> cout = out;
  const DiffArray in[] = {x, w, b};
  return emit(
      cout, in,
      [xv, wv, cout](const Matrix& g, std::span<Matrix* const> adj) {
        const Matrix gm = (cout->array() > 0.0).select(g.array(), 0.0);
        if (adj[0]) adj[0]->noalias() += gm * wv->transpose();
        if (adj[1]) add_xt_g(*adj[1], *xv, gm);
        if (adj[2]) *adj[2] += gm.colwise().sum();
      },
      "affine_relu");
}

DiffArray relu(const DiffArray& x) {
  return unary(
      x, "relu", [](const auto& v) -> Matrix { return v.max(0.0); },
      [](const auto& g, const auto& v, const auto&) -> Matrix {
        return (v > 0.0).select(g, 0.0);
      });
}

DiffArray softplus(const DiffArray& x) {
  // max(v, 0) + log1p(exp(-|v|)) is exact and never overflows.
  return unary(
      x, "softplus",
      [](const auto& v) -> Matrix { return v.max(0.0) + (-v.abs()).exp().log1p(); },
      [](const auto& g, const auto& v, const auto&) -> Matrix {
        // sigmoid(v), branch-stable
        const auto e = (-v.abs()).exp();
        const auto sig = (v >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
        return g * sig;
      });
}

DiffArray exp(const DiffArray& x) {
  return unary(
      x, "exp", [](const auto& v) -> Matrix { return v.exp(); },
      [](const auto& g, const auto&, const auto& out) -> Matrix { return g * out; });
}

DiffArray log(const DiffArray& x) {
  return unary(
      x, "log", [](const auto& v) -> Matrix { return v.log(); },
      [](const auto& g, const auto& v, const auto&) -> Matrix { return g / v; });
}

DiffArray sqrt(const DiffArray& x) {
  return unary(
      x, "sqrt", [](const auto& v) -> Matrix { return v.sqrt(); },
      [](const auto& g, const auto&, const auto& out) -> Matrix { return g * 0.5 / out; });
}

DiffArray abs(const DiffArray& x) {
  return unary(
      x, "abs", [](const auto& v) -> Matrix { return v.abs(); },
      [](const auto& g, const auto& v, const auto&) -> Matrix {
        return (v > 0.0).select(g, (v < 0.0).select(-g, 0.0));
      });
}

DiffArray tanh(const DiffArray& x) {
  return unary(
      x, "tanh", [](const auto& v) -> Matrix { return v.tanh(); },
      [](const auto& g, const auto&, const auto& out) -> Matrix {
        return g * (1.0 - out.square());
      });
}

DiffArray add(const DiffArray& a, const DiffArray& b) {
  return binary(
      a, b, "add", [](const auto& x, const auto& y) -> Matrix { return x + y; },
      [](const auto& g, const auto&, const auto&) -> Matrix { return g; },
      [](const auto& g, const auto&, const auto&) -> Matrix { return g; });
}

DiffArray sub(const DiffArray& a, const DiffArray& b) {
  return binary(
      a, b, "sub", [](const auto& x, const auto& y) -> Matrix { return x - y; },
      [](const auto& g, const auto&, const auto&) -> Matrix { return g; },
      [](const auto& g, const auto&, const auto&) -> Matrix { return -g; });
}

DiffArray mul(const DiffArray& a, const DiffArray& b) {
  return binary(
      a, b, "mul", [](const auto& x, const auto& y) -> Matrix { return x * y; },
      [](const auto& g, const auto&, const auto& y) -> Matrix { return g * y; },
      [](const auto& g, const auto& x, const auto&) -> Matrix { return g * x; });
}

DiffArray div(const DiffArray& a, const DiffArray& b) {
  return binary(
      a, b, "div", [](const auto& x, const auto& y) -> Matrix { return x / y; },
      [](const auto& g, const auto&, const auto& y) -> Matrix { return g / y; },
      [](const auto& g, const auto& x, const auto& y) -> Matrix { return -g * x / y.square(); });
}

DiffArray hypot(const DiffArray& a, const DiffArray& b) {
  auto safe = [](const auto& n) { return (n > 0.0).select(n, 1.0); };
  return binary(
      a, b, "hypot", [](const auto& x, const auto& y) -> Matrix { return (x.square() + y.square()).sqrt(); },
      [safe](const auto& g, const auto& x, const auto& y) -> Matrix {
        const auto n = (x.square() + y.square()).sqrt().eval();
        return g * x / safe(n);
      },
      [safe](const auto& g, const auto& x, const auto& y) -> Matrix {
        const auto n = (x.square() + y.square()).sqrt().eval();
        return g * y / safe(n);
      });
}

DiffArray scale(const DiffArray& x, double factor) {
  return unary(
      x, "scale", [factor](const auto& v) -> Matrix { return v * factor; },
      [factor](const auto& g, const auto&, const auto&) -> Matrix { return g * factor; });
}

DiffArray add_scalar(const DiffArray& x, double shift) {
  return unary(
      x, "add_scalar", [shift](const auto& v) -> Matrix { return v + shift; },
      [](const auto& g, const auto&, const auto&) -> Matrix { return g; });
}

DiffArray sum_rows(const DiffArray& x) {
  require_nonempty(x, "sum_rows");
  const Index n = x.rows();
  Matrix out = x.values().colwise().sum();
  return emit1(
      std::move(out), x,
      [n](const Matrix& g, std::span<Matrix* const> adj) {
        if (adj[0]) adj[0]->rowwise() += g.row(0);
        (void)n;
      },
      "sum_rows");
}

DiffArray mean(const DiffArray& x) {
  require_nonempty(x, "mean");
  const double inv = 1.0 / static_cast<double>(x.rows());
  Matrix out = x.values().colwise().sum() * inv;
  return emit1(
      std::move(out), x,
      [inv](const Matrix& g, std::span<Matrix* const> adj) {
        if (adj[0]) adj[0]->rowwise() += g.row(0) * inv;
      },
      "mean");
}

DiffArray sum_cols(const DiffArray& x) {
  require_nonempty(x, "sum_cols");
  Matrix out = x.values().rowwise().sum();
  return emit1(
      std::move(out), x,
      [](const Matrix& g, std::span<Matrix* const> adj) {
        if (adj[0]) adj[0]->colwise() += g.col(0);
      },
      "sum_cols");
}

DiffArray sample_variance(const DiffArray& x) {
  require_nonempty(x, "sample_variance");
  const Index n = x.rows();
  if (n < 2) throw ShapeError("sample_variance: batch must contain at least two rows");
  auto centred = std::make_shared<Matrix>(x.values().rowwise() - x.values().colwise().mean());
  const double inv = 1.0 / static_cast<double>(n - 1);
  Matrix out = centred->colwise().squaredNorm() * inv;
  return emit1(
      std::move(out), x,
      [centred, inv](const Matrix& g, std::span<Matrix* const> adj) {
        // d var / d x_i = 2 (x_i - mean) / (n - 1)
        if (adj[0]) adj[0]->array() += centred->array().rowwise() * (2.0 * inv * g.row(0).array());
      },
      "sample_variance");
}

DiffArray running_max(std::span<const DiffArray> sequence) {
  if (sequence.empty()) throw ShapeError("running_max: empty sequence");
  const Index r = sequence[0].rows();
  const Index c = sequence[0].cols();
  for (const auto& s : sequence) {
    require_nonempty(s, "running_max");
    if (s.rows() != r || s.cols() != c) throw ShapeError("running_max: shape mismatch");
  }
  Matrix out = sequence[0].values();
  auto arg = std::make_shared<Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(r, c));
  for (std::size_t k = 1; k < sequence.size(); ++k) {
    const Matrix& v = sequence[k].values();
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j)
        if (v(i, j) > out(i, j)) {  // strict: ties stay with the first index
          out(i, j) = v(i, j);
          (*arg)(i, j) = static_cast<std::int32_t>(k);
        }
  }
  return emit(
      std::move(out), sequence,
      [arg](const Matrix& g, std::span<Matrix* const> adj) {
        for (Index i = 0; i < g.rows(); ++i)
          for (Index j = 0; j < g.cols(); ++j) {
            Matrix* target = adj[static_cast<std::size_t>((*arg)(i, j))];
            if (target) (*target)(i, j) += g(i, j);
          }
      },
      "running_max");
}

DiffArray concat_cols(std::span<const DiffArray> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const Index r = parts[0].rows();
  Index total = 0;
  std::vector<Index> offsets;
  for (const auto& p : parts) {
    require_nonempty(p, "concat_cols");
    if (p.rows() != r) throw ShapeError("concat_cols: row count mismatch");
    offsets.push_back(total);
    total += p.cols();
  }
  Matrix out(r, total);
  for (std::size_t k = 0; k < parts.size(); ++k)
    out.middleCols(offsets[k], parts[k].cols()) = parts[k].values();
  return emit(
      std::move(out), parts,
      [offsets](const Matrix& g, std::span<Matrix* const> adj) {
        for (std::size_t k = 0; k < adj.size(); ++k)
          if (adj[k]) *adj[k] += g.middleCols(offsets[k], adj[k]->cols());
      },
      "concat_cols");
}

DiffArray column(const DiffArray& x, Index j) {
  require_nonempty(x, "column");
  if (j < 0 || j >= x.cols()) throw ShapeError("column: index out of range");
  Matrix out = x.values().col(j);
  return emit1(
      std::move(out), x,
      [j](const Matrix& g, std::span<Matrix* const> adj) {
        if (adj[0]) adj[0]->col(j) += g.col(0);
      },
      "column");
}

DiffArray detach(const DiffArray& x) {
  if (x.empty()) return x;
  return DiffArray::constant(x.shared_values());
}

}  // namespace nsde::ad
