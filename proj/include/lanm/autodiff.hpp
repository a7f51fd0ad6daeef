// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lanm/error.hpp"
#include "lanm/tensor.hpp"

namespace lanm::ad {

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  matmul,
  leaky_relu,
  tanh,
  exp,
  log,
  square,
  sum,
  mean,
  scalar_mul,
  concat_cols,
  slice_cols,
  broadcast_row,
  abs,
  clamp,
  custom,
};

inline std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::matmul: return "matmul";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::tanh: return "tanh";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::square: return "square";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::scalar_mul: return "scalar_mul";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::broadcast_row: return "broadcast_row";
    case OpKind::abs: return "abs";
    case OpKind::clamp: return "clamp";
    case OpKind::custom: return "custom";
  }
  return "?";
}

struct NodeId {
  std::uint32_t index = 0;
  friend auto operator<=>(NodeId, NodeId) = default;
};

/// Backward rule of a user-defined op: (input values, output value, output
/// gradient) -> one gradient per input.
using CustomBackward =
    std::function<std::vector<Tensor>(std::span<const Tensor* const>, const Tensor&, const Tensor&)>;

class Tape;

/// Result of a backward pass. Nodes that did not receive a gradient read as zeros.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Tensor> g, std::vector<std::pair<std::size_t, std::size_t>> shapes)
      : grads_(std::move(g)), shapes_(std::move(shapes)) {}

  Tensor of(NodeId id) const {
    const auto& g = grads_.at(id.index);
    if (g.empty()) return Tensor(shapes_[id.index].first, shapes_[id.index].second);
    return g;
  }

  /// Reference access; valid for parameter nodes, which always carry a gradient.
  const Tensor& ref(NodeId id) const { return grads_.at(id.index); }

 private:
  std::vector<Tensor> grads_;
  std::vector<std::pair<std::size_t, std::size_t>> shapes_;
};

/// Eagerly evaluated reverse-mode tape over dense 2-D tensors.
///
/// Nodes are appended in evaluation order, so every input id is smaller than
/// the id of the node consuming it. Gradients flow only into nodes that depend
/// on a parameter; constants are never differentiated.
class Tape {
 public:
  NodeId constant(Tensor value) { return push_leaf(std::move(value), false); }
  NodeId parameter(Tensor value) { return push_leaf(std::move(value), true); }

  const Tensor& value(NodeId id) const { return nodes_.at(id.index).value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool is_parameter(NodeId id) const { return nodes_.at(id.index).trainable; }
  OpKind kind(NodeId id) const { return nodes_.at(id.index).kind; }

  std::vector<NodeId> parameters() const {
    std::vector<NodeId> out;
    for (std::uint32_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].trainable) out.push_back(NodeId{i});
    return out;
  }

  /// Generic entry point. `scalar_a`/`scalar_b` carry the op attribute
  /// (leaky slope, scale factor, clamp bounds, slice range).
  NodeId tensor_op(OpKind kind, std::span<const NodeId> inputs, double scalar_a = 0.0,
                   double scalar_b = 0.0) {
    switch (kind) {
      case OpKind::add: return add(in(inputs, 0, kind), in(inputs, 1, kind));
      case OpKind::sub: return sub(in(inputs, 0, kind), in(inputs, 1, kind));
      case OpKind::mul: return mul(in(inputs, 0, kind), in(inputs, 1, kind));
      case OpKind::matmul: return matmul(in(inputs, 0, kind), in(inputs, 1, kind));
      case OpKind::leaky_relu: return leaky_relu(in(inputs, 0, kind), scalar_a);
      case OpKind::tanh: return tanh(in(inputs, 0, kind));
      case OpKind::exp: return exp(in(inputs, 0, kind));
      case OpKind::log: return log(in(inputs, 0, kind));
      case OpKind::square: return square(in(inputs, 0, kind));
      case OpKind::sum: return sum(in(inputs, 0, kind));
      case OpKind::mean: return mean(in(inputs, 0, kind));
      case OpKind::scalar_mul: return scale(in(inputs, 0, kind), scalar_a);
      case OpKind::concat_cols: return concat_cols(inputs);
      case OpKind::slice_cols:
        return slice_cols(in(inputs, 0, kind), static_cast<std::size_t>(scalar_a),
                          static_cast<std::size_t>(scalar_b));
      case OpKind::broadcast_row: return broadcast_row(in(inputs, 0, kind), static_cast<std::size_t>(scalar_a));
      case OpKind::abs: return abs(in(inputs, 0, kind));
      case OpKind::clamp: return clamp(in(inputs, 0, kind), scalar_a, scalar_b);
      case OpKind::leaf:
      case OpKind::custom: break;
    }
    throw DomainError("tensor_op: op kind '" + std::string(op_name(kind)) + "' cannot be built generically");
  }

  NodeId add(NodeId a, NodeId b) {
    same_shape(OpKind::add, a, b);
    Tensor out = value(a);
    const auto& vb = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    return push(OpKind::add, {a, b}, std::move(out));
  }

  NodeId sub(NodeId a, NodeId b) {
    same_shape(OpKind::sub, a, b);
    Tensor out = value(a);
    const auto& vb = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
    return push(OpKind::sub, {a, b}, std::move(out));
  }

  NodeId mul(NodeId a, NodeId b) {
    same_shape(OpKind::mul, a, b);
    Tensor out = value(a);
    const auto& vb = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return push(OpKind::mul, {a, b}, std::move(out));
  }

  NodeId matmul(NodeId a, NodeId b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    if (va.cols() != vb.rows()) shape_error(OpKind::matmul, va, vb);
    Tensor out(va.rows(), vb.cols());
    if (!out.empty() && va.cols() > 0) out.map().noalias() = va.map() * vb.map();
    return push(OpKind::matmul, {a, b}, std::move(out));
  }

  NodeId leaky_relu(NodeId a, double slope) {
    Tensor out = value(a);
    for (auto& x : out.values()) x = x > 0.0 ? x : slope * x;
    return push(OpKind::leaky_relu, {a}, std::move(out), slope);
  }

  NodeId tanh(NodeId a) { return unary(OpKind::tanh, a, [](double x) { return std::tanh(x); }); }
  NodeId exp(NodeId a) { return unary(OpKind::exp, a, [](double x) { return std::exp(x); }); }
  NodeId square(NodeId a) { return unary(OpKind::square, a, [](double x) { return x * x; }); }
  NodeId abs(NodeId a) { return unary(OpKind::abs, a, [](double x) { return std::fabs(x); }); }

  NodeId log(NodeId a) {
    for (double x : value(a).values()) {
      if (!(x > 0.0)) throw DomainError("log: non-positive entry " + std::to_string(x));
    }
    return unary(OpKind::log, a, [](double x) { return std::log(x); });
  }

  NodeId clamp(NodeId a, double lo, double hi) {
    if (!(lo <= hi)) throw DomainError("clamp: lower bound exceeds upper bound");
    Tensor out = value(a);
    for (auto& x : out.values()) x = std::clamp(x, lo, hi);
    return push(OpKind::clamp, {a}, std::move(out), lo, hi);
  }

  NodeId sum(NodeId a) {
    double s = 0.0;
    for (double x : value(a).values()) s += x;
    return push(OpKind::sum, {a}, Tensor::scalar(s));
  }

  NodeId mean(NodeId a) {
    const auto& v = value(a);
    if (v.empty()) throw ShapeError("mean: empty input " + v.shape_string());
    double s = 0.0;
    for (double x : v.values()) s += x;
    return push(OpKind::mean, {a}, Tensor::scalar(s / static_cast<double>(v.size())));
  }

  NodeId scale(NodeId a, double factor) {
    Tensor out = value(a);
    for (auto& x : out.values()) x *= factor;
    return push(OpKind::scalar_mul, {a}, std::move(out), factor);
  }

  NodeId concat_cols(std::span<const NodeId> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    for (auto p : parts) {
      if (value(p).rows() != rows) shape_error(OpKind::concat_cols, value(parts[0]), value(p));
      cols += value(p).cols();
    }
    Tensor out(rows, cols);
    std::size_t off = 0;
    for (auto p : parts) {
      const auto& v = value(p);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < v.cols(); ++c) out(r, off + c) = v(r, c);
      off += v.cols();
    }
    return push(OpKind::concat_cols, std::vector<NodeId>(parts.begin(), parts.end()), std::move(out));
  }
  NodeId concat_cols(std::initializer_list<NodeId> parts) {
    return concat_cols(std::span<const NodeId>(parts.begin(), parts.size()));
  }

  NodeId slice_cols(NodeId a, std::size_t begin, std::size_t end) {
    const auto& v = value(a);
    if (begin > end || end > v.cols()) {
      throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                       ") outside " + v.shape_string());
    }
    Tensor out(v.rows(), end - begin);
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = v(r, c);
    return push(OpKind::slice_cols, {a}, std::move(out), static_cast<double>(begin), static_cast<double>(end));
  }

  /// Repeats a 1xC row `rows` times.
  NodeId broadcast_row(NodeId a, std::size_t rows) {
    const auto& v = value(a);
    if (v.rows() != 1) throw ShapeError("broadcast_row: expected a 1xC input, got " + v.shape_string());
    Tensor out(rows, v.cols());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, c) = v[c];
    return push(OpKind::broadcast_row, {a}, std::move(out), static_cast<double>(rows));
  }

  /// User-defined op with an explicit backward rule.
  NodeId custom(std::span<const NodeId> inputs, Tensor output, CustomBackward backward) {
    NodeId id = push(OpKind::custom, std::vector<NodeId>(inputs.begin(), inputs.end()), std::move(output));
    nodes_.back().custom = std::move(backward);
    return id;
  }

  /// Reverse sweep from a 1x1 root in decreasing node-id order.
  Gradients backward(NodeId root) const {
    const auto& rv = value(root);
    if (rv.rows() != 1 || rv.cols() != 1) {
      throw ShapeError("backward: root must be 1x1, got " + rv.shape_string());
    }
    std::vector<Tensor> g(nodes_.size());
    std::vector<std::pair<std::size_t, std::size_t>> shapes(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) shapes[i] = {nodes_[i].value.rows(), nodes_[i].value.cols()};
    g[root.index] = Tensor::scalar(1.0);
    for (std::int64_t i = root.index; i >= 0; --i) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (g[i].empty() || n.kind == OpKind::leaf) continue;
      backward_node(n, g[i], g);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].trainable && g[i].empty()) g[i] = Tensor(shapes[i].first, shapes[i].second);
    }
    return Gradients(std::move(g), std::move(shapes));
  }

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    double a = 0.0;
    double b = 0.0;
    bool trainable = false;
    bool needs_grad = false;
    CustomBackward custom;
  };

  std::vector<Node> nodes_;

  NodeId in(std::span<const NodeId> inputs, std::size_t i, OpKind k) const {
    if (i >= inputs.size()) throw ShapeError(std::string(op_name(k)) + ": missing input " + std::to_string(i));
    return inputs[i];
  }

  [[noreturn]] static void shape_error(OpKind k, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op_name(k)) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }

  void same_shape(OpKind k, NodeId a, NodeId b) const {
    const auto& va = value(a);
    const auto& vb = value(b);
    if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error(k, va, vb);
  }

  template <class F>
  NodeId unary(OpKind k, NodeId a, F f) {
    Tensor out = value(a);
    for (auto& x : out.values()) x = f(x);
    return push(k, {a}, std::move(out));
  }

  NodeId push_leaf(Tensor value, bool trainable) {
    Node n;
    n.value = std::move(value);
    n.trainable = trainable;
    n.needs_grad = trainable;
    nodes_.push_back(std::move(n));
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  NodeId push(OpKind k, std::vector<NodeId> inputs, Tensor out, double a = 0.0, double b = 0.0) {
    Node n;
    n.kind = k;
    n.value = std::move(out);
    n.a = a;
    n.b = b;
    for (auto id : inputs) n.needs_grad = n.needs_grad || nodes_[id.index].needs_grad;
    n.inputs = std::move(inputs);
    nodes_.push_back(std::move(n));
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  void accumulate(std::vector<Tensor>& g, NodeId id, const Tensor& delta) const {
    if (!nodes_[id.index].needs_grad) return;
    Tensor& t = g[id.index];
    if (t.empty()) {
      t = delta;
    } else {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += delta[i];
    }
  }

  template <class F>
  void accumulate_map(std::vector<Tensor>& g, NodeId id, const Tensor& go, F f) const {
    if (!nodes_[id.index].needs_grad) return;
    Tensor& t = g[id.index];
    if (t.empty()) t = Tensor(go.rows(), go.cols());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += f(i, go[i]);
  }

  void backward_node(const Node& n, const Tensor& go, std::vector<Tensor>& g) const {
    auto iv = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k].index].value; };
    switch (n.kind) {
      case OpKind::add:
        accumulate(g, n.inputs[0], go);
        accumulate(g, n.inputs[1], go);
        break;
      case OpKind::sub:
        accumulate(g, n.inputs[0], go);
        accumulate_map(g, n.inputs[1], go, [](std::size_t, double x) { return -x; });
        break;
      case OpKind::mul: {
        const auto& a = iv(0);
        const auto& b = iv(1);
        accumulate_map(g, n.inputs[0], go, [&](std::size_t i, double x) { return x * b[i]; });
        accumulate_map(g, n.inputs[1], go, [&](std::size_t i, double x) { return x * a[i]; });
        break;
      }
      case OpKind::matmul: {
        const auto& a = iv(0);
        const auto& b = iv(1);
        if (nodes_[n.inputs[0].index].needs_grad) {
          Tensor da(a.rows(), a.cols());
          if (!da.empty() && b.cols() > 0) da.map().noalias() = go.map() * b.map().transpose();
          accumulate(g, n.inputs[0], da);
        }
        if (nodes_[n.inputs[1].index].needs_grad) {
          Tensor db(b.rows(), b.cols());
          if (!db.empty() && a.rows() > 0) db.map().noalias() = a.map().transpose() * go.map();
          accumulate(g, n.inputs[1], db);
        }
        break;
      }
      case OpKind::leaky_relu: {
        const auto& a = iv(0);
        accumulate_map(g, n.inputs[0], go, [&](std::size_t i, double x) { return a[i] > 0.0 ? x : n.a * x; });
        break;
      }
      case OpKind::tanh:
        accumulate_map(g, n.inputs[0], go,
                       [&](std::size_t i, double x) { return x * (1.0 - n.value[i] * n.value[i]); });
        break;
      case OpKind::exp:
        accumulate_map(g, n.inputs[0], go, [&](std::size_t i, double x) { return x * n.value[i]; });
        break;
      case OpKind::log: {
        const auto& a = iv(0);
        accumulate_map(g, n.inputs[0], go, [&](std::size_t i, double x) { return x / a[i]; });
        break;
      }
      case OpKind::square: {
        const auto& a = iv(0);
        accumulate_map(g, n.inputs[0], go, [&](std::size_t i, double x) { return 2.0 * a[i] * x; });
        break;
      }
      case OpKind::abs: {
        const auto& a = iv(0);
        accumulate_map(g, n.inputs[0], go, [&](std::size_t i, double x) {
          return a[i] > 0.0 ? x : (a[i] < 0.0 ? -x : 0.0);
        });
        break;
      }
      case OpKind::clamp: {
        const auto& a = iv(0);
        accumulate_map(g, n.inputs[0], go,
                       [&](std::size_t i, double x) { return (a[i] >= n.a && a[i] <= n.b) ? x : 0.0; });
        break;
      }
      case OpKind::sum: {
        const auto& a = iv(0);
        Tensor d(a.rows(), a.cols(), go[0]);
        accumulate(g, n.inputs[0], d);
        break;
      }
      case OpKind::mean: {
        const auto& a = iv(0);
        Tensor d(a.rows(), a.cols(), go[0] / static_cast<double>(a.size()));
        accumulate(g, n.inputs[0], d);
        break;
      }
      case OpKind::scalar_mul:
        accumulate_map(g, n.inputs[0], go, [&](std::size_t, double x) { return n.a * x; });
        break;
      case OpKind::concat_cols: {
        std::size_t off = 0;
        for (auto id : n.inputs) {
          const auto& v = nodes_[id.index].value;
          if (nodes_[id.index].needs_grad) {
            Tensor d(v.rows(), v.cols());
            for (std::size_t r = 0; r < v.rows(); ++r)
              for (std::size_t c = 0; c < v.cols(); ++c) d(r, c) = go(r, off + c);
            accumulate(g, id, d);
          }
          off += v.cols();
        }
        break;
      }
      case OpKind::slice_cols: {
        const auto& a = iv(0);
        if (!nodes_[n.inputs[0].index].needs_grad) break;
        const auto begin = static_cast<std::size_t>(n.a);
        Tensor d(a.rows(), a.cols());
        for (std::size_t r = 0; r < go.rows(); ++r)
          for (std::size_t c = 0; c < go.cols(); ++c) d(r, begin + c) = go(r, c);
        accumulate(g, n.inputs[0], d);
        break;
      }
      case OpKind::broadcast_row: {
        Tensor d(1, go.cols());
        for (std::size_t r = 0; r < go.rows(); ++r)
          for (std::size_t c = 0; c < go.cols(); ++c) d[c] += go(r, c);
        accumulate(g, n.inputs[0], d);
        break;
      }
      case OpKind::custom: {
        std::vector<const Tensor*> ins;
        for (auto id : n.inputs) ins.push_back(&nodes_[id.index].value);
        auto grads = n.custom(ins, n.value, go);
        if (grads.size() != n.inputs.size()) throw ShapeError("custom: backward returned wrong arity");
        for (std::size_t k = 0; k < grads.size(); ++k) accumulate(g, n.inputs[k], grads[k]);
        break;
      }
      case OpKind::leaf: break;
    }
  }
};

}  // namespace lanm::ad
