#pragma once

// Define-by-run reverse-mode differentiation over dense double tensors.
//
// A Tape records every primitive in execution order, so parents always
// precede children and the reverse sweep is a single pass over the node
// list. Gradients accumulate by addition in tape order, which keeps the
// summation order (and therefore the result bits) fixed between replays.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "ultrasnn/tensor.hpp"

namespace ultrasnn {

using NodeId = std::size_t;
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  NodeId id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

enum class OpKind {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  AddScalarVar,
  MulScalarVar,
  DivScalarVar,
  Matmul,
  Linear,
  AddRow,
  Sum,
  Mean,
  Reshape,
  Sigmoid,
  LogSigmoid,
  Exp,
  Log,
  LseStack,
  LseLast,
  Roll,
  Heaviside,
  SurrogateSpike,
  DSpikeSpike,
  SoftmaxCrossEntropy,
};

std::string_view to_string(OpKind op);

class Tape {
 public:
  /// Propagates the upstream gradient of `self` into its parents' buffers.
  using BackwardFn = std::function<void(Tape& tape, NodeId self)>;

  /// A non-recording tape evaluates values only; backward() is rejected.
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Trainable input; gradients are retained for it after backward().
  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }

  Var record(OpKind op, Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(OpKind op, Tensor value, std::span<const Var> parents, BackwardFn backward);

  /// Reverse sweep from a scalar root. Clears gradients from any earlier sweep.
  void backward(Var root);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  OpKind op(NodeId id) const { return nodes_[id].op; }
  const std::vector<NodeId>& parents(NodeId id) const { return nodes_[id].parents; }

  /// Gradient of the last root w.r.t. `v`; zeros when nothing flowed into it.
  Tensor grad(Var v) const;

  /// Upstream gradient of a node during the sweep (allocated on demand).
  Tensor& grad_buffer(NodeId id);
  bool has_grad(NodeId id) const { return nodes_[id].has_grad; }

 private:
  struct Node {
    OpKind op;
    Tensor value;
    std::vector<NodeId> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
    Tensor grad;
  };

  Var push(OpKind op, Tensor value, std::span<const Var> parents, BackwardFn backward);

  bool recording_;
  std::vector<Node> nodes_;
};

namespace ad {

// Elementwise, same shape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
/// 1 - a.
Var one_minus(Var a);

// Scalar-variable broadcast: every element of `a` combined with the single value of `s`.
Var add_scalar(Var a, Var s);
Var mul_scalar(Var a, Var s);
Var div_scalar(Var a, Var s);

/// [m, k] x [k, n] -> [m, n].
Var matmul(Var a, Var b);
/// x [batch, in], weight [out, in], bias [out] -> x * weight^T + bias.
Var linear(Var x, Var weight, Var bias);
/// a [rows, n] + row [n] broadcast over rows.
Var add_row(Var a, Var row);

Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);

Var sigmoid(Var a);
/// log(sigmoid(a)), evaluated without cancellation for large |a|.
Var log_sigmoid(Var a);
Var exp(Var a);
Var log(Var a);

/// eps * log(sum_i exp(x_i / eps)) taken elementwise across same-shaped terms.
/// Max-shifted; gradient w.r.t. the terms is softmax(x / eps).
Var lse(std::span<const Var> terms, Var eps);
Var lse(std::initializer_list<Var> terms, Var eps);
/// Same relaxation reducing the last axis: [..., n] -> [...].
Var lse_last(Var x, Var eps);

/// Circular shift along the last axis: out[..., i] = a[..., (i - shift) mod n].
Var roll(Var a, long shift);

/// H(a) = 1 for a > 0 else 0. Its derivative is zero wherever it exists.
Var heaviside(Var a);
/// Hard spike H(u) forward; backward substitutes beta * sigmoid'(beta * u).
Var surrogate_spike(Var u, double beta);
/// Hard spike H(v - theta) forward; backward differentiates the DSpike tanh form
/// (tanh(k (v/(2 theta) - 1/2)) + tanh(k/2)) / (2 tanh(k/2)) w.r.t. v and k.
Var dspike_spike(Var v, double theta, Var k);

/// Mean softmax cross-entropy of logits [batch, classes] against integer labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace ad

/// Numerically stable logistic function shared by the neuron code and the oracles' callers.
double stable_sigmoid(double x) noexcept;

}  // namespace ultrasnn
