#include "autodiff/tape.hpp"

#include <algorithm>
#include <cmath>

namespace nsde::ad {

bool all_finite(const Matrix& m) {
  // A finite sum rules out NaN and infinities; only an overflowing sum needs the full scan.
  if (std::isfinite(m.sum())) return true;
  return m.allFinite();
}

DiffArray DiffArray::constant(Matrix values) {
  DiffArray out;
  out.values_ = std::make_shared<const Matrix>(std::move(values));
  return out;
}

DiffArray DiffArray::constant(std::shared_ptr<const Matrix> values) {
  DiffArray out;
  out.values_ = std::move(values);
  return out;
}

DiffArray DiffArray::scalar(double value) { return filled(1, 1, value); }

DiffArray DiffArray::filled(Eigen::Index rows, Eigen::Index cols, double value) {
  return constant(Matrix::Constant(rows, cols, value));
}

const Matrix& DiffArray::values() const {
  if (!values_) throw ShapeError("DiffArray: empty array has no values");
  return *values_;
}

double DiffArray::item() const {
  const Matrix& v = values();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("DiffArray::item: array is not 1x1");
  return v(0, 0);
}

// ---------------------------------------------------------------------------

ParamId ParamStore::add(std::string name, Matrix init) {
  if (find(name)) throw ConfigError("ParamStore: duplicate parameter name '" + name + "'");
  names_.push_back(std::move(name));
  grads_.push_back(Matrix::Zero(init.rows(), init.cols()));
  values_.push_back(std::move(init));
  frozen_.push_back(false);
  return ParamId{values_.size() - 1};
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

std::optional<ParamId> ParamStore::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return ParamId{static_cast<std::size_t>(it - names_.begin())};
}

void ParamStore::zero_grad() {
  for (auto& g : grads_) g.setZero();
}

std::vector<double> ParamStore::flat_values() const {
  std::vector<double> out;
  out.reserve(element_count());
  for (const auto& v : values_) out.insert(out.end(), v.data(), v.data() + v.size());
  return out;
}

std::vector<double> ParamStore::flat_grads() const {
  std::vector<double> out;
  out.reserve(element_count());
  for (const auto& g : grads_) out.insert(out.end(), g.data(), g.data() + g.size());
  return out;
}

void ParamStore::set_flat_values(std::span<const double> flat) {
  if (flat.size() != element_count()) throw ShapeError("ParamStore: flat size mismatch");
  std::size_t offset = 0;
  for (auto& v : values_) {
    std::copy_n(flat.data() + offset, v.size(), v.data());
    offset += static_cast<std::size_t>(v.size());
  }
}

// ---------------------------------------------------------------------------

DiffArray Tape::param(ParamStore& store, ParamId id) {
  if (store.frozen(id)) return DiffArray::constant(store.value(id));
  Node node;
  node.value = std::make_shared<const Matrix>(store.value(id));
  node.store = &store;
  node.param = id;
  bytes_ += static_cast<std::size_t>(node.value->size()) * sizeof(double);
  nodes_.push_back(std::move(node));
  DiffArray out;
  out.values_ = nodes_.back().value;
  out.tape_ = this;
  out.node_ = nodes_.size() - 1;
  return out;
}

DiffArray Tape::record(std::shared_ptr<const Matrix> value, std::span<const DiffArray> inputs,
                       BackwardFn fn, const char* op_name) {
  if (!all_finite(*value)) throw NumericError(std::string("non-finite output in op '") + op_name + "'");
  Node node;
  node.parents.reserve(inputs.size());
  bool any_attached = false;
  for (const auto& in : inputs) {
    if (in.attached()) {
      if (in.tape_ != this) throw ShapeError(std::string("op '") + op_name + "': inputs on different tapes");
      node.parents.push_back(static_cast<std::ptrdiff_t>(in.node_));
      any_attached = true;
    } else {
      node.parents.push_back(-1);
    }
  }
  if (!any_attached) return DiffArray::constant(std::move(value));
  node.value = std::move(value);
  node.fn = std::move(fn);
  bytes_ += static_cast<std::size_t>(node.value->size()) * sizeof(double);
  nodes_.push_back(std::move(node));
  DiffArray out;
  out.values_ = nodes_.back().value;
  out.tape_ = this;
  out.node_ = nodes_.size() - 1;
  return out;
}

void Tape::backward(const DiffArray& scalar, std::vector<Matrix>* sink, bool consume) {
  if (!scalar.attached()) throw ShapeError("backward: called on a detached array");
  if (scalar.tape_ != this) throw ShapeError("backward: array belongs to another tape");
  if (scalar.rows() != 1 || scalar.cols() != 1) throw ShapeError("backward: output is not a 1x1 scalar");

  adjoints_.assign(nodes_.size(), Matrix());
  adjoints_[scalar.node_] = Matrix::Ones(1, 1);

  std::vector<Matrix*> in_adj;
  for (std::size_t i = scalar.node_ + 1; i-- > 0;) {
    Matrix& adj = adjoints_[i];
    if (adj.size() == 0) continue;
    Node& node = nodes_[i];
    if (node.store != nullptr) {
      if (sink == nullptr) {
        node.store->grad(node.param) += adj;
      } else {
        if (sink->size() <= node.param.index) sink->resize(node.param.index + 1);
        Matrix& g = (*sink)[node.param.index];
        if (g.size() == 0) g = adj;
        else g += adj;
      }
      if (consume) {
        Matrix().swap(adj);
        node.value.reset();
      }
      continue;
    }
    in_adj.assign(node.parents.size(), nullptr);
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      const std::ptrdiff_t parent = node.parents[p];
      if (parent < 0) continue;
      Matrix& pa = adjoints_[static_cast<std::size_t>(parent)];
      if (pa.size() == 0) {
        const Matrix& pv = *nodes_[static_cast<std::size_t>(parent)].value;
        pa = Matrix::Zero(pv.rows(), pv.cols());
      }
      in_adj[p] = &pa;
    }
    node.fn(adj, in_adj);
    if (consume) {
      Matrix().swap(adj);
      node.fn = nullptr;
      node.value.reset();
    }
  }
  if (consume) clear();
}

Matrix Tape::adjoint(const DiffArray& x) const {
  if (!x.attached() || x.tape_ != this || x.node_ >= adjoints_.size() ||
      adjoints_[x.node_].size() == 0) {
    return Matrix::Zero(x.rows(), x.cols());
  }
  return adjoints_[x.node_];
}

void Tape::clear() {
  nodes_.clear();
  adjoints_.clear();
  bytes_ = 0;
}

}  // namespace nsde::ad
