#pragma once

#include <span>
#include <vector>

#include "autodiff/tape.hpp"

// Tensor-level differentiable operations. Binary operations broadcast an
// operand with a single row or a single column against the other operand;
// no other broadcasting is supported.

namespace nsde::ad {

/// x (n x in) * W (in x out) + B (1 x out).
DiffArray affine(const DiffArray& x, const DiffArray& w, const DiffArray& b);

/// relu(affine(x, W, B)) as a single node.
DiffArray affine_relu(const DiffArray& x, const DiffArray& w, const DiffArray& b);

DiffArray relu(const DiffArray& x);
/// log(1 + exp(x)), evaluated without overflow for large |x|.
DiffArray softplus(const DiffArray& x);
DiffArray exp(const DiffArray& x);
DiffArray log(const DiffArray& x);
DiffArray sqrt(const DiffArray& x);
DiffArray abs(const DiffArray& x);
DiffArray tanh(const DiffArray& x);

DiffArray add(const DiffArray& a, const DiffArray& b);
DiffArray sub(const DiffArray& a, const DiffArray& b);
DiffArray mul(const DiffArray& a, const DiffArray& b);
DiffArray div(const DiffArray& a, const DiffArray& b);
/// sqrt(a^2 + b^2) with a zero subgradient at the origin.
DiffArray hypot(const DiffArray& a, const DiffArray& b);

DiffArray scale(const DiffArray& x, double factor);
DiffArray add_scalar(const DiffArray& x, double shift);

/// Column-wise mean over the batch: (n x w) -> (1 x w).
DiffArray mean(const DiffArray& x);
/// Column-wise sum over the batch: (n x w) -> (1 x w).
DiffArray sum_rows(const DiffArray& x);
/// Row-wise sum over the width: (n x w) -> (n x 1).
DiffArray sum_cols(const DiffArray& x);
/// Unbiased (divisor n - 1) column-wise variance over the batch.
DiffArray sample_variance(const DiffArray& x);

/// Elementwise maximum across a sequence of equally shaped arrays. The
/// adjoint of each element goes to the first index attaining the maximum.
DiffArray running_max(std::span<const DiffArray> sequence);

DiffArray concat_cols(std::span<const DiffArray> parts);
DiffArray column(const DiffArray& x, Eigen::Index j);

/// Same values, no tape linkage.
DiffArray detach(const DiffArray& x);

}  // namespace nsde::ad
