#include "dustbin/tape.hpp"

#include <cstring>

namespace dustbin {

const Array& GradientMap::operator[](Var v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) throw IndexError("no gradient recorded for node " + std::to_string(v.id()));
  return it->second;
}

Var Tape::variable(Array value) {
  Node n;
  n.value = std::move(value);
  n.is_variable = true;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Array value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Tape::set_value(Var leaf, Array value) {
  Node& n = nodes_.at(leaf.id());
  if (n.kind != OpKind::Leaf) throw ContractError("set_value on a non-leaf node");
  if (value.shape() != n.value.shape()) {
    throw DimensionError("set_value: " + shape_string(value.shape()) + " for leaf of shape " +
                         shape_string(n.value.shape()));
  }
  n.value = std::move(value);
}

Var Tape::record(OpKind kind, std::vector<std::size_t> inputs, Attrs attrs) {
  Node n;
  n.kind = kind;
  n.inputs = std::move(inputs);
  n.attrs = std::move(attrs);
  for (auto i : n.inputs) {
    if (i >= nodes_.size()) throw ContractError("tape input refers to a later node");
    n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
  }
  n.value = forward(n);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Array Tape::forward(Node& n) const {
  auto in = [&](std::size_t k) -> const Array& { return nodes_[n.inputs[k]].value; };
  switch (n.kind) {
    case OpKind::Leaf: return n.value;
    case OpKind::MatMul: return matmul(in(0), in(1));
    case OpKind::Add: return add(in(0), in(1));
    case OpKind::Sub: return sub(in(0), in(1));
    case OpKind::Mul: return mul(in(0), in(1));
    case OpKind::Scale: return scale(in(0), n.attrs.scalar);
    case OpKind::AddBias: return add_bias(in(0), in(1));
    case OpKind::AddChannelBias: return add_channel_bias(in(0), in(1));
    case OpKind::Relu: return relu(in(0));
    case OpKind::Tanh: return tanh(in(0));
    case OpKind::Conv2d: return conv2d(in(0), in(1), n.attrs.stride, n.attrs.padding);
    case OpKind::MaxPool2d: return maxpool2d(in(0), &n.argmax);
    case OpKind::Reshape: return in(0).reshaped(n.attrs.shape);
    case OpKind::Sum: return sum(in(0));
    case OpKind::SoftmaxCrossEntropy: return softmax_cross_entropy(in(0), n.attrs.targets);
  }
  throw ContractError("unknown tape op");
}

void Tape::replay() {
  for (auto& n : nodes_) {
    if (n.kind != OpKind::Leaf) n.value = forward(n);
  }
}

std::uint64_t Tape::branch_signature() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  for (const auto& n : nodes_) {
    if (n.kind == OpKind::Relu) {
      const Array& x = nodes_[n.inputs[0]].value;
      for (std::size_t i = 0; i < x.size(); ++i) mix(x[i] > 0.0 ? 1 : 0);
    } else if (n.kind == OpKind::MaxPool2d) {
      for (auto a : n.argmax) mix(a);
    }
  }
  return h;
}

GradientMap Tape::grad(Var root) const {
  if (root.id() >= nodes_.size()) throw ContractError("grad: root is not on this tape");
  if (nodes_[root.id()].value.size() != 1) {
    throw ContractError("grad: root must be scalar, got shape " + shape_string(nodes_[root.id()].value.shape()));
  }
  std::vector<Array> grads(root.id() + 1);
  std::vector<bool> has_grad(root.id() + 1, false);
  grads[root.id()] = Array::filled(nodes_[root.id()].value.shape(), 1.0);
  has_grad[root.id()] = true;

  for (std::size_t i = root.id() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!has_grad[i] || n.kind == OpKind::Leaf || !n.needs_grad) continue;
    backward(n, grads[i], grads, has_grad);
  }

  GradientMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_variable) continue;
    if (i <= root.id() && has_grad[i]) {
      out.grads_.emplace(i, std::move(grads[i]));
    } else {
      out.grads_.emplace(i, Array(nodes_[i].value.shape()));
    }
  }
  return out;
}

void Tape::backward(const Node& n, const Array& g, std::vector<Array>& grads, std::vector<bool>& has_grad) const {
  auto in = [&](std::size_t k) -> const Array& { return nodes_[n.inputs[k]].value; };
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };
  auto accumulate = [&](std::size_t k, Array delta) {
    const std::size_t id = n.inputs[k];
    if (!has_grad[id]) {
      grads[id] = std::move(delta);
      has_grad[id] = true;
    } else {
      grads[id].values() += delta.values();
    }
  };

  switch (n.kind) {
    case OpKind::Leaf:
      return;
    case OpKind::MatMul: {
      if (wants(0)) {
        Array da(in(0).shape());
        da.matrix().noalias() = g.matrix() * in(1).matrix().transpose();
        accumulate(0, std::move(da));
      }
      if (wants(1)) {
        Array db(in(1).shape());
        db.matrix().noalias() = in(0).matrix().transpose() * g.matrix();
        accumulate(1, std::move(db));
      }
      return;
    }
    case OpKind::Add:
      if (wants(0)) accumulate(0, g);
      if (wants(1)) accumulate(1, g);
      return;
    case OpKind::Sub:
      if (wants(0)) accumulate(0, g);
      if (wants(1)) accumulate(1, scale(g, -1.0));
      return;
    case OpKind::Mul:
      if (wants(0)) accumulate(0, mul(g, in(1)));
      if (wants(1)) accumulate(1, mul(g, in(0)));
      return;
    case OpKind::Scale:
      if (wants(0)) accumulate(0, scale(g, n.attrs.scalar));
      return;
    case OpKind::AddBias:
      if (wants(0)) accumulate(0, g);
      if (wants(1)) {
        if (g.rank() == 1) {
          accumulate(1, g);
        } else {
          accumulate(1, Array(in(1).shape(), g.matrix().colwise().sum().transpose()));
        }
      }
      return;
    case OpKind::AddChannelBias:
      if (wants(0)) accumulate(0, g);
      if (wants(1)) {
        const std::size_t plane = g.extent(1) * g.extent(2);
        Array db(in(1).shape());
        for (std::size_t f = 0; f < g.extent(0); ++f) {
          db[f] = g.values().segment(static_cast<Eigen::Index>(f * plane), static_cast<Eigen::Index>(plane)).sum();
        }
        accumulate(1, std::move(db));
      }
      return;
    case OpKind::Relu:
      if (wants(0)) {
        Array d = g;
        const Array& x = in(0);
        for (std::size_t i = 0; i < d.size(); ++i) {
          if (!(x[i] > 0.0)) d[i] = 0.0;
        }
        accumulate(0, std::move(d));
      }
      return;
    case OpKind::Tanh:
      if (wants(0)) {
        const Array& y = n.value;
        accumulate(0, Array(g.shape(), g.values().cwiseProduct((1.0 - y.values().array().square()).matrix())));
      }
      return;
    case OpKind::Conv2d: {
      const Array& x = in(0);
      const Array& k = in(1);
      const ConvGeometry geo = conv_geometry(x.shape(), k.shape(), n.attrs.stride, n.attrs.padding);
      const auto rows = static_cast<Eigen::Index>(geo.filters);
      const auto cols_n = static_cast<Eigen::Index>(geo.out_h * geo.out_w);
      Eigen::Map<const Array::RowMajorMatrix> gm(g.values().data(), rows, cols_n);
      if (wants(1)) {
        const Eigen::MatrixXd cols = im2col(x, geo);
        Array dk(k.shape());
        Eigen::Map<Array::RowMajorMatrix>(dk.values().data(), rows,
                                          static_cast<Eigen::Index>(geo.channels * geo.kernel_h * geo.kernel_w))
            .noalias() = gm * cols.transpose();
        accumulate(1, std::move(dk));
      }
      if (wants(0)) {
        const auto km = k.reshaped({geo.filters, geo.channels * geo.kernel_h * geo.kernel_w});
        const Eigen::MatrixXd dcols = km.matrix().transpose() * gm;
        accumulate(0, col2im(dcols, geo));
      }
      return;
    }
    case OpKind::MaxPool2d:
      if (wants(0)) {
        Array d(in(0).shape());
        for (std::size_t o = 0; o < n.argmax.size(); ++o) d[n.argmax[o]] += g[o];
        accumulate(0, std::move(d));
      }
      return;
    case OpKind::Reshape:
      if (wants(0)) accumulate(0, g.reshaped(in(0).shape()));
      return;
    case OpKind::Sum:
      if (wants(0)) accumulate(0, Array::filled(in(0).shape(), g.item()));
      return;
    case OpKind::SoftmaxCrossEntropy:
      if (wants(0)) {
        const Array& logits = in(0);
        Array d = softmax(logits);
        const std::size_t k = logits.shape().back();
        const double rows = static_cast<double>(n.attrs.targets.size());
        for (std::size_t r = 0; r < n.attrs.targets.size(); ++r) d[r * k + n.attrs.targets[r]] -= 1.0;
        d.values() *= g.item() / rows;
        accumulate(0, std::move(d));
      }
      return;
  }
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
  return a.tape();
}

}  // namespace

Var matmul(Var a, Var b) { return same_tape(a, b).record(OpKind::MatMul, {a.id(), b.id()}); }
Var add(Var a, Var b) { return same_tape(a, b).record(OpKind::Add, {a.id(), b.id()}); }
Var sub(Var a, Var b) { return same_tape(a, b).record(OpKind::Sub, {a.id(), b.id()}); }
Var mul(Var a, Var b) { return same_tape(a, b).record(OpKind::Mul, {a.id(), b.id()}); }

Var scale(Var a, double s) {
  Tape::Attrs attrs;
  attrs.scalar = s;
  return a.tape().record(OpKind::Scale, {a.id()}, std::move(attrs));
}

Var add_bias(Var a, Var bias) { return same_tape(a, bias).record(OpKind::AddBias, {a.id(), bias.id()}); }
Var add_channel_bias(Var a, Var bias) {
  return same_tape(a, bias).record(OpKind::AddChannelBias, {a.id(), bias.id()});
}
Var relu(Var a) { return a.tape().record(OpKind::Relu, {a.id()}); }
Var tanh(Var a) { return a.tape().record(OpKind::Tanh, {a.id()}); }

Var conv2d(Var input, Var kernels, std::size_t stride, Padding padding) {
  Tape::Attrs attrs;
  attrs.stride = stride;
  attrs.padding = padding;
  return same_tape(input, kernels).record(OpKind::Conv2d, {input.id(), kernels.id()}, std::move(attrs));
}

Var maxpool2d(Var input) { return input.tape().record(OpKind::MaxPool2d, {input.id()}); }

Var reshape(Var a, Shape shape) {
  if (shape_size(shape) != a.value().size()) {
    throw DimensionError("cannot reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  Tape::Attrs attrs;
  attrs.shape = std::move(shape);
  return a.tape().record(OpKind::Reshape, {a.id()}, std::move(attrs));
}

Var sum(Var a) { return a.tape().record(OpKind::Sum, {a.id()}); }

Var softmax_cross_entropy(Var logits, std::size_t target) {
  return softmax_cross_entropy(logits, std::vector<std::size_t>{target});
}

Var softmax_cross_entropy(Var logits, std::vector<std::size_t> targets) {
  Tape::Attrs attrs;
  attrs.targets = std::move(targets);
  return logits.tape().record(OpKind::SoftmaxCrossEntropy, {logits.id()}, std::move(attrs));
}

}  // namespace dustbin
