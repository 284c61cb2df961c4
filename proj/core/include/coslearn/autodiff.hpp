// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "coslearn/tensor.hpp"

namespace coslearn {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives and has not been cleared.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient after Tape::backward. Zeros if the node received no gradient.
  const Tensor& grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of operations for reverse-mode differentiation.
///
/// Nodes are stored in creation order, which is a topological order since an
/// op can only reference nodes that already exist. A tape belongs to one
/// thread; independent tapes may run concurrently.
class Tape {
 public:
  /// Backward rule: receives the node's own id and output gradient, and
  /// accumulates into its operands through Tape::grad_of.
  using BackwardFn = std::function<void(Tape&, std::size_t self, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient; registered as a parameter.
  Var parameter(Tensor value);
  /// Leaf without a gradient.
  Var constant(Tensor value);

  /// Records an op result. `inputs` lists operand node ids; if none of them
  /// require a gradient the backward rule is dropped.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Reverse accumulation from a single-element loss. Gradients are reset
  /// first, so repeated calls give identical results.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Mutable gradient buffer of a node, allocated as zeros on first use.
  /// Only meaningful inside a backward rule.
  Tensor& grad_of(std::size_t id);

  std::span<const std::size_t> parameters() const noexcept { return parameters_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() noexcept;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::size_t> parameters_;
};

/// Differentiable operations. Unless noted, operands must share a shape; the
/// only broadcasting is scalar-with-tensor.
namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
/// Tensor times a rank-0 Var.
Var mul_scalar(Var a, Var s);
Var relu(Var a);
/// Natural log; input must be positive.
Var log(Var a);
Var exp(Var a);

Var sum(Var a);
Var mean(Var a);
/// Sum over the last axis: (..., n) -> (...).
Var sum_last(Var a);
/// Full contraction of two same-shape tensors to a scalar.
Var dot(Var a, Var b);

/// (m x k) * (k x n) -> (m x n).
Var matmul(Var a, Var b);
/// x * W + 1 b^T for x (batch x in), W (in x out), b (out).
Var linear(Var x, Var weight, Var bias);

/// x / ||x|| along the last axis. Throws DegenerateVectorError when a slice has
/// norm <= kNormalizeEps.
Var l2_normalize(Var a);
/// Softmax along the last axis, computed with max subtraction.
Var softmax(Var a);
Var log_softmax(Var a);

/// Rows [begin, end) of a rank-2 tensor.
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);

}  // namespace ops

inline constexpr double kNormalizeEps = 1e-12;

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, Var b) { return ops::mul(a, b); }
inline Var operator*(Var a, double s) { return ops::scale(a, s); }
inline Var operator*(double s, Var a) { return ops::scale(a, s); }

/// Plain (untaped) forward kernels shared with the differentiable ops.
namespace kernels {
Tensor matmul(const Tensor& a, const Tensor& b);
/// a^T * b.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a * b^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor l2_normalize(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
}  // namespace kernels

}  // namespace coslearn
