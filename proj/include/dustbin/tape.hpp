#pragma once

#include <cstddef>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "dustbin/array.hpp"
#include "dustbin/kernels.hpp"

namespace dustbin {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Array& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class OpKind : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  AddBias,
  AddChannelBias,
  Relu,
  Tanh,
  Conv2d,
  MaxPool2d,
  Reshape,
  Sum,
  SoftmaxCrossEntropy,
};

struct OpAttrs {
  std::size_t stride = 1;
  Padding padding = Padding::Valid;
  double scalar = 0.0;
  Shape shape;
  std::vector<std::size_t> targets;
};

/// Gradients of a scalar root with respect to every variable leaf that
/// reaches it. Leaves the root does not depend on get a zero array.
class GradientMap {
 public:
  const Array& operator[](Var v) const;
  bool contains(Var v) const { return grads_.count(v.id()) != 0; }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Array> grads_;
};

/// Record of primitive operations in creation (hence topological) order.
/// Single-owner, single-threaded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(Array value);
  /// Leaf treated as a constant.
  Var constant(Array value);

  const Array& value(Var v) const { return nodes_.at(v.id()).value; }
  std::size_t size() const { return nodes_.size(); }
  OpKind kind(Var v) const { return nodes_.at(v.id()).kind; }

  /// Replace a leaf's value. Downstream values go stale until `replay()`.
  void set_value(Var leaf, Array value);

  /// Recompute every non-leaf node from the current leaf values.
  void replay();

  /// Hash of every piecewise branch taken (ReLU signs, max-pool winners).
  /// Two evaluations with equal signatures lie on the same smooth piece.
  std::uint64_t branch_signature() const;

  /// Reverse accumulation from a scalar root.
  GradientMap grad(Var root) const;

  using Attrs = OpAttrs;
  /// Recording entry point used by the Var overloads below.
  Var record(OpKind kind, std::vector<std::size_t> inputs, Attrs attrs = {});

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<std::size_t> inputs;
    Attrs attrs;
    Array value;
    std::vector<std::size_t> argmax;
    bool is_variable = false;
    bool needs_grad = false;
  };

  Array forward(Node& node) const;
  void backward(const Node& node, const Array& upstream, std::vector<Array>& grads,
                std::vector<bool>& has_grad) const;

  std::vector<Node> nodes_;
};

inline const Array& Var::value() const { return tape_->value(*this); }

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_bias(Var a, Var bias);
Var add_channel_bias(Var a, Var bias);
Var relu(Var a);
Var tanh(Var a);
Var conv2d(Var input, Var kernels, std::size_t stride, Padding padding);
Var maxpool2d(Var input);
Var reshape(Var a, Shape shape);
Var sum(Var a);
Var softmax_cross_entropy(Var logits, std::size_t target);
Var softmax_cross_entropy(Var logits, std::vector<std::size_t> targets);

inline Array reshape(const Array& a, Shape shape) { return a.reshaped(std::move(shape)); }

}  // namespace dustbin
