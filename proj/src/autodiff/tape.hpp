#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common/errors.hpp"

namespace nsde::ad {

/// Row-major (batch x width) storage used for every value and adjoint.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;
class ParamStore;

/// True when no entry is NaN or infinite.
bool all_finite(const Matrix& m);

struct ParamId {
  std::size_t index = 0;
  friend bool operator==(ParamId, ParamId) = default;
};

/// A batched array that is either recorded on a tape (attached) or a plain
/// constant (detached). Values are immutable and shared between copies.
class DiffArray {
 public:
  DiffArray() = default;

  static DiffArray constant(Matrix values);
  static DiffArray constant(std::shared_ptr<const Matrix> values);
  static DiffArray scalar(double value);
  static DiffArray filled(Eigen::Index rows, Eigen::Index cols, double value);

  Eigen::Index rows() const { return values_ ? values_->rows() : 0; }
  Eigen::Index cols() const { return values_ ? values_->cols() : 0; }
  bool empty() const { return !values_; }

  const Matrix& values() const;
  std::shared_ptr<const Matrix> shared_values() const { return values_; }
  double item() const;

  bool attached() const { return tape_ != nullptr; }
  std::optional<std::size_t> node() const {
    return tape_ ? std::optional<std::size_t>(node_) : std::nullopt;
  }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  std::shared_ptr<const Matrix> values_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// Named parameter tensors with gradient accumulators of identical shape.
class ParamStore {
 public:
  ParamId add(std::string name, Matrix init);

  std::size_t size() const { return values_.size(); }
  std::size_t element_count() const;

  const std::string& name(ParamId id) const { return names_.at(id.index); }
  std::optional<ParamId> find(const std::string& name) const;

  const Matrix& value(ParamId id) const { return values_.at(id.index); }
  Matrix& value(ParamId id) { return values_.at(id.index); }
  const Matrix& grad(ParamId id) const { return grads_.at(id.index); }
  Matrix& grad(ParamId id) { return grads_.at(id.index); }

  bool frozen(ParamId id) const { return frozen_.at(id.index); }
  void set_frozen(ParamId id, bool frozen) { frozen_.at(id.index) = frozen; }

  void zero_grad();
  void scale_grad(ParamId id, double factor) { grads_.at(id.index) *= factor; }

  /// Concatenation of all values (or gradients) in insertion order, row-major.
  std::vector<double> flat_values() const;
  std::vector<double> flat_grads() const;
  void set_flat_values(std::span<const double> flat);

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::vector<Matrix> grads_;
  std::vector<bool> frozen_;
};

/// Reverse-mode recording of tensor-level operations.
///
/// Each node owns its value and a closure that maps the node's adjoint onto
/// the adjoints of its parents. Parameter leaves forward their adjoint into
/// the owning ParamStore during backward().
class Tape {
 public:
  using BackwardFn =
      std::function<void(const Matrix& out_adjoint, std::span<Matrix* const> in_adjoints)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf bound to a parameter. Frozen parameters come back detached.
  DiffArray param(ParamStore& store, ParamId id);

  /// Records a node whose parents are the attached entries of `inputs`.
  /// Returns a detached array when no input is attached.
  DiffArray record(std::shared_ptr<const Matrix> value, std::span<const DiffArray> inputs,
                   BackwardFn fn, const char* op_name);

  /// Accumulates d(scalar)/d(param) into every reached parameter accumulator,
  /// or into `sink` (indexed by ParamId, entries allocated on first touch)
  /// when one is given. With `consume`, node values, closures and adjoints
  /// are released as the sweep passes them, leaving the tape unusable.
  void backward(const DiffArray& scalar, std::vector<Matrix>* sink = nullptr,
                bool consume = false);

  /// Adjoint of `x` from the last backward(); zero for detached or unreached arrays.
  Matrix adjoint(const DiffArray& x) const;

  std::size_t size() const { return nodes_.size(); }
  /// Bytes held by node values.
  std::size_t bytes() const { return bytes_; }
  void clear();

 private:
  struct Node {
    std::shared_ptr<const Matrix> value;
    std::vector<std::ptrdiff_t> parents;  // -1 marks a detached input
    BackwardFn fn;
    ParamStore* store = nullptr;
    ParamId param{};
  };
  std::vector<Node> nodes_;
  std::vector<Matrix> adjoints_;
  std::size_t bytes_ = 0;
};

}  // namespace nsde::ad
