#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gsure/tensor.hpp"

// Reverse-mode differentiation over an append-only tape, with forward-mode
// tangent propagation that is itself recorded on the tape. Recording the
// tangent nodes lets `backward` differentiate a scalar that contains a
// Jacobian-vector product of the network (the divergence term).
namespace gsure::ad {

struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class Activation { silu, tanh };

enum class OpKind {
  input,
  parameter,
  constant,
  add,
  sub,
  mul,        // elementwise product of two nodes
  mul_const,  // elementwise product with a fixed tensor (masks, weights)
  matmul,     // [B,k] x [k,m]
  affine,     // x*W + 1*b^T, x [B,k], W [k,m], b [m]
  activation, // k-th derivative of a smooth nonlinearity, elementwise
  sum,        // all entries -> scalar
  row_sum,    // [B,n] -> [B]
  scale,      // times a fixed scalar
};

// Derivative of order `order` (0..3) of the activation, evaluated elementwise.
double activation_value(Activation act, int order, double x);

// Gradients returned by `Graph::backward`, aligned with `Graph::parameters()`
// and `Graph::inputs()`.
struct Gradients {
  std::vector<Tensor> params;
  std::vector<Tensor> inputs;
};

class Graph {
 public:
  NodeId input(Tensor value);
  NodeId parameter(Tensor value);
  NodeId constant(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId mul_const(NodeId a, Tensor c);
  NodeId matmul(NodeId a, NodeId b);
  NodeId affine(NodeId x, NodeId w, NodeId b);
  NodeId activation(NodeId x, Activation act, int order = 0);
  NodeId sum(NodeId x);
  NodeId row_sum(NodeId x);
  NodeId scale(NodeId x, double s);

  // Records the directional derivative of `of` with respect to the input or
  // parameter node `wrt` along `direction` (a node with the shape of `wrt`).
  // Returns a node whose value is J*direction; it participates in backward
  // like any other node.
  NodeId tangent(NodeId of, NodeId wrt, NodeId direction);

  // Output used by forward/backward/jvp; defaults to the last recorded node.
  void set_output(NodeId id);
  NodeId output() const;

  // Evaluates every node. With arguments, rebinds input nodes in creation
  // order first. Throws ShapeError on a signature mismatch and
  // NonFiniteError when any intermediate value is NaN/Inf.
  const Tensor& forward();
  const Tensor& forward(std::span<const Tensor> inputs);

  // Reverse-mode gradient of (seed . output). Requires a prior forward.
  Gradients backward(const Tensor& seed) const;
  Gradients backward(NodeId of, const Tensor& seed) const;

  // Forward-mode derivative of the output along `direction` with respect to
  // the first input. The tangent computation is appended to the graph and
  // becomes the new output, so a following backward differentiates it.
  const Tensor& jvp(std::span<const Tensor> inputs, const Tensor& direction);

  const Tensor& value(NodeId id) const;
  void set_value(NodeId id, Tensor value);
  const Shape& shape(NodeId id) const { return nodes_.at(id.index).shape; }
  OpKind kind(NodeId id) const { return nodes_.at(id.index).kind; }

  std::span<const NodeId> parameters() const { return params_; }
  std::span<const NodeId> inputs() const { return inputs_; }
  std::size_t size() const { return nodes_.size(); }
  bool evaluated() const { return evaluated_; }

 private:
  struct Node {
    OpKind kind;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::uint32_t c = 0;
    Activation act = Activation::silu;
    int order = 0;
    double scalar = 0.0;
    Shape shape{};
    Tensor value{};  // evaluated value (or bound value for leaves)
    Tensor operand{};  // mul_const factor
    bool differentiable = false;
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const { return nodes_.at(id.index); }
  void evaluate(Node& n);
  void check(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> params_;
  std::vector<NodeId> inputs_;
  std::optional<NodeId> output_;
  bool evaluated_ = false;
};

}  // namespace gsure::ad
