#include "gsure/graph.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "gsure/error.hpp"

namespace gsure::ad {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::mul_const: return "mul_const";
    case OpKind::matmul: return "matmul";
    case OpKind::affine: return "affine";
    case OpKind::activation: return "activation";
    case OpKind::sum: return "sum";
    case OpKind::row_sum: return "row_sum";
    case OpKind::scale: return "scale";
  }
  return "?";
}

}  // namespace

double activation_value(Activation act, int order, double x) {
  switch (act) {
    case Activation::silu: {
      const double s = sigmoid(x);
      const double ds = s * (1.0 - s);
      switch (order) {
        case 0: return x * s;
        case 1: return s * (1.0 + x * (1.0 - s));
        case 2: return ds * (2.0 + x * (1.0 - 2.0 * s));
        case 3: return ds * ((1.0 - 2.0 * s) * (3.0 + x * (1.0 - 2.0 * s)) - 2.0 * x * ds);
        default: break;
      }
      break;
    }
    case Activation::tanh: {
      const double th = std::tanh(x);
      const double d = 1.0 - th * th;
      switch (order) {
        case 0: return th;
        case 1: return d;
        case 2: return -2.0 * th * d;
        case 3: return d * (6.0 * th * th - 2.0);
        default: break;
      }
      break;
    }
  }
  throw DomainError("activation derivative of order " + std::to_string(order) + " is not available");
}

NodeId Graph::push(Node node) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) throw Error("graph: too many nodes");
  evaluated_ = false;
  nodes_.push_back(std::move(node));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Graph::check(NodeId id) const {
  if (id.index >= nodes_.size()) throw Error("graph: unknown node " + std::to_string(id.index));
}

NodeId Graph::input(Tensor value) {
  Node n{.kind = OpKind::input};
  n.shape = value.shape();
  n.value = std::move(value);
  n.differentiable = true;
  const NodeId id = push(std::move(n));
  inputs_.push_back(id);
  return id;
}

NodeId Graph::parameter(Tensor value) {
  Node n{.kind = OpKind::parameter};
  n.shape = value.shape();
  n.value = std::move(value);
  n.differentiable = true;
  const NodeId id = push(std::move(n));
  params_.push_back(id);
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n{.kind = OpKind::constant};
  n.shape = value.shape();
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  check(a);
  check(b);
  if (shape(a) != shape(b)) {
    throw ShapeError("add: " + shape_string(shape(a)) + " vs " + shape_string(shape(b)));
  }
  Node n{.kind = OpKind::add, .a = a.index, .b = b.index};
  n.shape = shape(a);
  n.differentiable = node(a).differentiable || node(b).differentiable;
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  check(a);
  check(b);
  if (shape(a) != shape(b)) {
    throw ShapeError("sub: " + shape_string(shape(a)) + " vs " + shape_string(shape(b)));
  }
  Node n{.kind = OpKind::sub, .a = a.index, .b = b.index};
  n.shape = shape(a);
  n.differentiable = node(a).differentiable || node(b).differentiable;
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  check(a);
  check(b);
  if (shape(a) != shape(b)) {
    throw ShapeError("mul: " + shape_string(shape(a)) + " vs " + shape_string(shape(b)));
  }
  Node n{.kind = OpKind::mul, .a = a.index, .b = b.index};
  n.shape = shape(a);
  n.differentiable = node(a).differentiable || node(b).differentiable;
  return push(std::move(n));
}

NodeId Graph::mul_const(NodeId a, Tensor c) {
  check(a);
  if (shape(a) != c.shape()) {
    throw ShapeError("mul_const: " + shape_string(shape(a)) + " vs " + shape_string(c.shape()));
  }
  Node n{.kind = OpKind::mul_const, .a = a.index};
  n.shape = shape(a);
  n.operand = std::move(c);
  n.differentiable = node(a).differentiable;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  check(a);
  check(b);
  const Shape& sa = shape(a);
  const Shape& sb = shape(b);
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeError("matmul: " + shape_string(sa) + " x " + shape_string(sb));
  }
  Node n{.kind = OpKind::matmul, .a = a.index, .b = b.index};
  n.shape = Shape{sa[0], sb[1]};
  n.differentiable = node(a).differentiable || node(b).differentiable;
  return push(std::move(n));
}

NodeId Graph::affine(NodeId x, NodeId w, NodeId b) {
  check(x);
  check(w);
  check(b);
  const Shape& sx = shape(x);
  const Shape& sw = shape(w);
  const Shape& sb = shape(b);
  if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[0] || sb != Shape{sw[1]}) {
    throw ShapeError("affine: x " + shape_string(sx) + ", W " + shape_string(sw) + ", b " +
                     shape_string(sb));
  }
  Node n{.kind = OpKind::affine, .a = x.index, .b = w.index, .c = b.index};
  n.shape = Shape{sx[0], sw[1]};
  n.differentiable = node(x).differentiable || node(w).differentiable || node(b).differentiable;
  return push(std::move(n));
}

NodeId Graph::activation(NodeId x, Activation act, int order) {
  check(x);
  if (order < 0 || order > 3) throw DomainError("activation: order must be in [0, 3]");
  Node n{.kind = OpKind::activation, .a = x.index, .act = act, .order = order};
  n.shape = shape(x);
  n.differentiable = node(x).differentiable;
  return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
  check(x);
  Node n{.kind = OpKind::sum, .a = x.index};
  n.shape = Shape{};
  n.differentiable = node(x).differentiable;
  return push(std::move(n));
}

NodeId Graph::row_sum(NodeId x) {
  check(x);
  if (shape(x).size() != 2) throw ShapeError("row_sum: expected rank 2, got " + shape_string(shape(x)));
  Node n{.kind = OpKind::row_sum, .a = x.index};
  n.shape = Shape{shape(x)[0]};
  n.differentiable = node(x).differentiable;
  return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double s) {
  check(x);
  Node n{.kind = OpKind::scale, .a = x.index, .scalar = s};
  n.shape = shape(x);
  n.differentiable = node(x).differentiable;
  return push(std::move(n));
}

NodeId Graph::tangent(NodeId of, NodeId wrt, NodeId direction) {
  check(of);
  check(wrt);
  check(direction);
  if (shape(direction) != shape(wrt)) {
    throw ShapeError("tangent: direction " + shape_string(shape(direction)) + " vs input " +
                     shape_string(shape(wrt)));
  }
  const OpKind wk = kind(wrt);
  if (wk != OpKind::input && wk != OpKind::parameter) {
    throw Error("tangent: can only differentiate with respect to an input or parameter");
  }
  if (of.index < wrt.index) return constant(Tensor(shape(of)));

  std::vector<std::optional<NodeId>> tan(of.index + 1);
  tan[wrt.index] = direction;
  // Each rule uses only primitives, so the tangent graph is itself
  // differentiable by backward.
  auto plus = [this](std::optional<NodeId> x, std::optional<NodeId> y) -> std::optional<NodeId> {
    if (!x) return y;
    if (!y) return x;
    return add(*x, *y);
  };
  for (std::uint32_t i = wrt.index + 1; i <= of.index; ++i) {
    // Copy the fields used below: pushing new nodes may reallocate nodes_.
    struct {
      OpKind kind;
      std::uint32_t a, b, c;
      Activation act;
      int order;
      double scalar;
    } n{nodes_[i].kind, nodes_[i].a, nodes_[i].b, nodes_[i].c, nodes_[i].act, nodes_[i].order, nodes_[i].scalar};
    const NodeId a{n.a};
    const NodeId b{n.b};
    switch (n.kind) {
      case OpKind::input:
      case OpKind::parameter:
      case OpKind::constant:
        break;
      case OpKind::add:
        tan[i] = plus(tan[n.a], tan[n.b]);
        break;
      case OpKind::sub:
        if (tan[n.a] && tan[n.b]) {
          tan[i] = sub(*tan[n.a], *tan[n.b]);
        } else if (tan[n.a]) {
          tan[i] = tan[n.a];
        } else if (tan[n.b]) {
          tan[i] = scale(*tan[n.b], -1.0);
        }
        break;
      case OpKind::mul: {
        std::optional<NodeId> left;
        std::optional<NodeId> right;
        if (tan[n.a]) left = mul(*tan[n.a], b);
        if (tan[n.b]) right = mul(a, *tan[n.b]);
        tan[i] = plus(left, right);
        break;
      }
      case OpKind::mul_const:
        if (tan[n.a]) {
          Tensor factor = nodes_[i].operand;
          tan[i] = mul_const(*tan[n.a], std::move(factor));
        }
        break;
      case OpKind::matmul: {
        std::optional<NodeId> left;
        std::optional<NodeId> right;
        if (tan[n.a]) left = matmul(*tan[n.a], b);
        if (tan[n.b]) right = matmul(a, *tan[n.b]);
        tan[i] = plus(left, right);
        break;
      }
      case OpKind::affine: {
        std::optional<NodeId> part;
        if (tan[n.c]) {
          const NodeId tx = tan[n.a] ? *tan[n.a] : constant(Tensor(shape(a)));
          part = affine(tx, b, *tan[n.c]);
        } else if (tan[n.a]) {
          part = matmul(*tan[n.a], b);
        }
        if (tan[n.b]) part = plus(part, matmul(a, *tan[n.b]));
        tan[i] = part;
        break;
      }
      case OpKind::activation:
        if (tan[n.a]) tan[i] = mul(activation(a, n.act, n.order + 1), *tan[n.a]);
        break;
      case OpKind::sum:
        if (tan[n.a]) tan[i] = sum(*tan[n.a]);
        break;
      case OpKind::row_sum:
        if (tan[n.a]) tan[i] = row_sum(*tan[n.a]);
        break;
      case OpKind::scale:
        if (tan[n.a]) tan[i] = scale(*tan[n.a], n.scalar);
        break;
    }
  }
  if (!tan[of.index]) return constant(Tensor(shape(of)));
  return *tan[of.index];
}

void Graph::set_output(NodeId id) {
  check(id);
  output_ = id;
}

NodeId Graph::output() const {
  if (output_) return *output_;
  if (nodes_.empty()) throw Error("graph: empty graph has no output");
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Graph::evaluate(Node& n) {
  auto v = [this](std::uint32_t i) -> const Tensor& { return nodes_[i].value; };
  switch (n.kind) {
    case OpKind::input:
    case OpKind::parameter:
    case OpKind::constant:
      return;
    case OpKind::add:
      n.value = v(n.a) + v(n.b);
      return;
    case OpKind::sub:
      n.value = v(n.a) - v(n.b);
      return;
    case OpKind::mul:
      n.value = hadamard(v(n.a), v(n.b));
      return;
    case OpKind::mul_const:
      n.value = hadamard(v(n.a), n.operand);
      return;
    case OpKind::matmul:
      n.value = gsure::matmul(v(n.a), v(n.b));
      return;
    case OpKind::affine: {
      Tensor out = gsure::matmul(v(n.a), v(n.b));
      const Tensor& bias = v(n.c);
      const std::size_t m = bias.size();
      for (std::size_t r = 0; r < out.shape()[0]; ++r) {
        double* row = out.data().data() + r * m;
        for (std::size_t j = 0; j < m; ++j) row[j] += bias[j];
      }
      n.value = std::move(out);
      return;
    }
    case OpKind::activation: {
      Tensor out = v(n.a);
      for (double& x : out.storage()) x = activation_value(n.act, n.order, x);
      n.value = std::move(out);
      return;
    }
    case OpKind::sum:
      n.value = Tensor::scalar(v(n.a).sum());
      return;
    case OpKind::row_sum: {
      const Tensor& x = v(n.a);
      Tensor out(Shape{x.shape()[0]});
      for (std::size_t r = 0; r < x.shape()[0]; ++r) {
        double s = 0.0;
        for (double e : x.row(r)) s += e;
        out[r] = s;
      }
      n.value = std::move(out);
      return;
    }
    case OpKind::scale:
      n.value = n.scalar * v(n.a);
      return;
  }
}

const Tensor& Graph::forward() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    evaluate(n);
    if (!n.value.all_finite()) {
      throw NonFiniteError("graph: non-finite value at node " + std::to_string(i) + " (" +
                               op_name(n.kind) + ")",
                           i);
    }
  }
  evaluated_ = true;
  return nodes_[output().index].value;
}

const Tensor& Graph::forward(std::span<const Tensor> inputs) {
  if (inputs.size() != inputs_.size()) {
    throw ShapeError("forward: graph takes " + std::to_string(inputs_.size()) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) set_value(inputs_[i], inputs[i]);
  return forward();
}

const Tensor& Graph::jvp(std::span<const Tensor> inputs, const Tensor& direction) {
  if (inputs_.empty()) throw Error("jvp: graph has no inputs");
  const NodeId out = output();
  const NodeId dir = constant(direction);
  const NodeId t = tangent(out, inputs_.front(), dir);
  set_output(t);
  return forward(inputs);
}

const Tensor& Graph::value(NodeId id) const {
  check(id);
  const Node& n = node(id);
  if (!evaluated_ && n.kind != OpKind::input && n.kind != OpKind::parameter &&
      n.kind != OpKind::constant) {
    throw Error("graph: value requested before forward");
  }
  return n.value;
}

void Graph::set_value(NodeId id, Tensor value) {
  check(id);
  Node& n = nodes_[id.index];
  if (n.kind != OpKind::input && n.kind != OpKind::parameter) {
    throw Error("graph: only inputs and parameters can be rebound");
  }
  if (value.shape() != n.shape) {
    throw ShapeError("graph: rebinding " + shape_string(n.shape) + " with " + shape_string(value.shape()));
  }
  n.value = std::move(value);
  evaluated_ = false;
}

Gradients Graph::backward(const Tensor& seed) const { return backward(output(), seed); }

Gradients Graph::backward(NodeId of, const Tensor& seed) const {
  check(of);
  if (!evaluated_) throw Error("backward: forward has not been run on this graph");
  if (seed.shape() != shape(of)) {
    throw ShapeError("backward: seed " + shape_string(seed.shape()) + " vs output " +
                     shape_string(shape(of)));
  }
  std::vector<Tensor> adj(of.index + 1);
  std::vector<char> has(of.index + 1, 0);
  auto acc = [&](std::uint32_t i, Tensor g) {
    if (!nodes_[i].differentiable) return;
    if (has[i]) {
      adj[i] += g;
    } else {
      adj[i] = std::move(g);
      has[i] = 1;
    }
  };
  adj[of.index] = seed;
  has[of.index] = 1;

  for (std::int64_t i = of.index; i >= 0; --i) {
    if (!has[i]) continue;
    const Node& n = nodes_[i];
    const Tensor& g = adj[i];
    switch (n.kind) {
      case OpKind::input:
      case OpKind::parameter:
      case OpKind::constant:
        break;
      case OpKind::add:
        acc(n.a, g);
        acc(n.b, g);
        break;
      case OpKind::sub:
        acc(n.a, g);
        acc(n.b, -1.0 * g);
        break;
      case OpKind::mul:
        if (nodes_[n.a].differentiable) acc(n.a, hadamard(g, nodes_[n.b].value));
        if (nodes_[n.b].differentiable) acc(n.b, hadamard(g, nodes_[n.a].value));
        break;
      case OpKind::mul_const:
        acc(n.a, hadamard(g, n.operand));
        break;
      case OpKind::matmul:
        if (nodes_[n.a].differentiable) acc(n.a, matmul_nt(g, nodes_[n.b].value));
        if (nodes_[n.b].differentiable) acc(n.b, matmul_tn(nodes_[n.a].value, g));
        break;
      case OpKind::affine: {
        if (nodes_[n.a].differentiable) acc(n.a, matmul_nt(g, nodes_[n.b].value));
        if (nodes_[n.b].differentiable) acc(n.b, matmul_tn(nodes_[n.a].value, g));
        if (nodes_[n.c].differentiable) {
          const std::size_t m = g.shape()[1];
          Tensor gb(Shape{m});
          for (std::size_t r = 0; r < g.shape()[0]; ++r) {
            const double* row = g.data().data() + r * m;
            for (std::size_t j = 0; j < m; ++j) gb[j] += row[j];
          }
          acc(n.c, std::move(gb));
        }
        break;
      }
      case OpKind::activation: {
        if (n.order >= 3) {
          throw DomainError("backward: fourth derivative of the activation is not available");
        }
        Tensor d = nodes_[n.a].value;
        for (std::size_t k = 0; k < d.size(); ++k) {
          d[k] = g[k] * activation_value(n.act, n.order + 1, d[k]);
        }
        acc(n.a, std::move(d));
        break;
      }
      case OpKind::sum:
        acc(n.a, Tensor(nodes_[n.a].shape, g.item()));
        break;
      case OpKind::row_sum: {
        const Shape& s = nodes_[n.a].shape;
        Tensor d(s);
        for (std::size_t r = 0; r < s[0]; ++r) {
          for (double& e : d.row(r)) e = g[r];
        }
        acc(n.a, std::move(d));
        break;
      }
      case OpKind::scale:
        acc(n.a, n.scalar * g);
        break;
    }
  }

  Gradients out;
  out.params.reserve(params_.size());
  for (NodeId p : params_) {
    if (p.index <= of.index && has[p.index]) {
      out.params.push_back(adj[p.index]);
    } else {
      out.params.emplace_back(shape(p));
    }
  }
  out.inputs.reserve(inputs_.size());
  for (NodeId p : inputs_) {
    if (p.index <= of.index && has[p.index]) {
      out.inputs.push_back(adj[p.index]);
    } else {
      out.inputs.emplace_back(shape(p));
    }
  }
  return out;
}

}  // namespace gsure::ad
