#include "gsure/graph.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "gsure/error.hpp"
#include "support/oracles.hpp"

namespace gsure::ad {
namespace {

using gsure::testing::central_difference;
using gsure::testing::fraction_within;
using gsure::testing::random_tensor;
using gsure::testing::ReferenceMlp;

TEST(GraphForward, IdentityReturnsInput) {
  Graph g;
  const Tensor x = Tensor::matrix(1, 3, {1, -2, 3});
  g.input(x);
  std::vector<Tensor> in{x};
  EXPECT_EQ(g.forward(in), x);
}

TEST(GraphForward, AffineWithIdentityWeights) {
  Graph g;
  const Tensor x = Tensor::matrix(2, 2, {0.5, 1.5, -1, 2});
  const NodeId in = g.input(Tensor(Shape{2, 2}));
  const NodeId w = g.parameter(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const NodeId b = g.parameter(Tensor::vector({0, 0}));
  g.affine(in, w, b);
  std::vector<Tensor> inputs{x};
  EXPECT_EQ(g.forward(inputs), x);
}

TEST(GraphForward, TwoLayerNetAtZeroIsTheBiasPath) {
  Rng rng(11);
  const ReferenceMlp net = ReferenceMlp::random({5, 7, 3}, rng);
  Graph g;
  const NodeId x = g.input(Tensor(Shape{1, 5}));
  net.record(g, x);
  const Tensor out = g.forward();
  // Hand evaluation: silu(b1) W2 + b2.
  for (std::size_t j = 0; j < 3; ++j) {
    double s = net.biases[1][j];
    for (std::size_t i = 0; i < 7; ++i) {
      const double b = net.biases[0][i];
      s += b / (1.0 + std::exp(-b)) * net.weights[1].at(i, j);
    }
    EXPECT_NEAR(out[j], s, 1e-14);
  }
}

TEST(GraphForward, ShapeErrors) {
  Graph g;
  const NodeId a = g.input(Tensor(Shape{2, 3}));
  const NodeId b = g.input(Tensor(Shape{3, 2}));
  EXPECT_THROW(g.add(a, b), ShapeError);
  EXPECT_THROW(g.matmul(a, a), ShapeError);
  EXPECT_THROW(g.mul_const(a, Tensor(Shape{3})), ShapeError);
  std::vector<Tensor> wrong{Tensor(Shape{2, 3})};
  EXPECT_THROW(g.forward(wrong), ShapeError);
}

TEST(GraphForward, NonFiniteIntermediateAborts) {
  Graph g;
  const NodeId x = g.input(Tensor::vector({1.0, 2.0}));
  g.scale(x, std::numeric_limits<double>::infinity());
  EXPECT_THROW(g.forward(), NonFiniteError);
}

TEST(GraphBackward, ScaleByTwo) {
  Graph g;
  g.scale(g.input(Tensor::scalar(3.0)), 2.0);
  g.forward();
  const Gradients grads = g.backward(Tensor::scalar(1.0));
  EXPECT_DOUBLE_EQ(grads.inputs[0].item(), 2.0);
}

TEST(GraphBackward, SumOfSquares) {
  Graph g;
  const Tensor x = Tensor::vector({1.0, -2.0, 0.5});
  const NodeId in = g.input(x);
  g.sum(g.mul(in, in));
  g.forward();
  const Gradients grads = g.backward(Tensor::scalar(1.0));
  EXPECT_EQ(grads.inputs[0], 2.0 * x);
}

TEST(GraphBackward, RequiresForward) {
  Graph g;
  g.sum(g.input(Tensor::vector({1.0})));
  EXPECT_THROW(g.backward(Tensor::scalar(1.0)), Error);
  g.forward();
  EXPECT_THROW(g.backward(Tensor::vector({1.0})), ShapeError);
}

TEST(GraphBackward, ThreeLayerMlpMatchesFiniteDifferences) {
  Rng rng(3);
  const ReferenceMlp net = ReferenceMlp::random({16, 12, 10, 4}, rng);
  const Tensor x = random_tensor(Shape{3, 16}, rng);
  const Tensor seed = random_tensor(Shape{3, 4}, rng);

  Graph g;
  const NodeId in = g.input(x);
  net.record(g, in);
  g.forward();
  const Gradients grads = g.backward(seed);

  auto objective = [&](NodeId leaf) {
    return [&, leaf](const Tensor& value) {
      Graph copy = g;
      copy.set_value(leaf, value);
      return dot(seed, copy.forward());
    };
  };
  for (std::size_t p = 0; p < g.parameters().size(); ++p) {
    const NodeId leaf = g.parameters()[p];
    const Tensor fd = central_difference(g.value(leaf), objective(leaf));
    EXPECT_GE(fraction_within(grads.params[p], fd, 1e-4), 1.0) << "parameter " << p;
  }
  const Tensor fd_x = central_difference(x, objective(in));
  EXPECT_GE(fraction_within(grads.inputs[0], fd_x, 1e-4), 1.0);
}

TEST(GraphJvp, LinearMapGivesAv) {
  const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  Graph g;
  const NodeId x = g.input(Tensor(Shape{1, 2}));
  g.matmul(x, g.constant(a));
  std::vector<Tensor> in{Tensor::matrix(1, 2, {0.3, -0.7})};
  const Tensor v = Tensor::matrix(1, 2, {1.0, 2.0});
  EXPECT_EQ(g.jvp(in, v), matmul(v, a));
}

TEST(GraphJvp, ElementwiseSquare) {
  Graph g;
  const NodeId x = g.input(Tensor(Shape{3}));
  g.mul(x, x);
  const Tensor xv = Tensor::vector({1.0, -2.0, 3.0});
  const Tensor v = Tensor::vector({0.5, 0.25, -1.0});
  std::vector<Tensor> in{xv};
  EXPECT_EQ(g.jvp(in, v), 2.0 * hadamard(xv, v));
}

TEST(GraphJvp, MlpMatchesFiniteDifferences) {
  Rng rng(5);
  const ReferenceMlp net = ReferenceMlp::random({6, 9, 9, 6}, rng);
  const Tensor x = random_tensor(Shape{2, 6}, rng);
  const Tensor v = random_tensor(Shape{2, 6}, rng);

  Graph g;
  const NodeId in = g.input(x);
  net.record(g, in);
  std::vector<Tensor> inputs{x};
  const Tensor jv = g.jvp(inputs, v);

  const double h = 1e-5;
  Graph fwd;
  net.record(fwd, fwd.input(x));
  std::vector<Tensor> plus{x + h * v};
  const Tensor up = fwd.forward(plus);
  std::vector<Tensor> minus{x - h * v};
  const Tensor down = fwd.forward(minus);
  const Tensor fd = (1.0 / (2.0 * h)) * (up - down);
  EXPECT_GE(fraction_within(jv, fd, 1e-4), 1.0);
}

TEST(GraphJvp, IsLinearInTheDirection) {
  Rng rng(7);
  const ReferenceMlp net = ReferenceMlp::random({4, 8, 4}, rng);
  const Tensor x = random_tensor(Shape{3, 4}, rng);
  const Tensor v1 = random_tensor(Shape{3, 4}, rng);
  const Tensor v2 = random_tensor(Shape{3, 4}, rng);
  const double a = 0.7;
  const double b = -1.3;

  auto jvp = [&](const Tensor& v) {
    Graph g;
    net.record(g, g.input(x));
    std::vector<Tensor> in{x};
    return g.jvp(in, v);
  };
  const Tensor combined = jvp(a * v1 + b * v2);
  const Tensor separate = a * jvp(v1) + b * jvp(v2);
  for (std::size_t i = 0; i < combined.size(); ++i) EXPECT_NEAR(combined[i], separate[i], 1e-10);
}

// Differentiating u . (J v) with respect to the weights is the capability the
// divergence term of the training loss needs.
TEST(GraphJvp, GradientThroughTangentMatchesFiniteDifferences) {
  Rng rng(9);
  const ReferenceMlp net = ReferenceMlp::random({5, 8, 8, 5}, rng);
  const Tensor x = random_tensor(Shape{2, 5}, rng);
  const Tensor v = random_tensor(Shape{2, 5}, rng);
  const Tensor u = random_tensor(Shape{2, 5}, rng);

  Graph g;
  const NodeId in = g.input(x);
  const NodeId out = net.record(g, in);
  const NodeId jv = g.tangent(out, in, g.constant(v));
  const NodeId scalar = g.sum(g.mul_const(jv, u));
  g.forward();
  const Gradients grads = g.backward(scalar, Tensor::scalar(1.0));

  for (std::size_t p = 0; p < g.parameters().size(); ++p) {
    const NodeId leaf = g.parameters()[p];
    const Tensor fd = central_difference(g.value(leaf), [&](const Tensor& value) {
      Graph copy = g;
      copy.set_value(leaf, value);
      copy.forward();
      return copy.value(scalar).item();
    });
    EXPECT_GE(fraction_within(grads.params[p], fd, 1e-3), 1.0) << "parameter " << p;
  }
}

TEST(Graph, ReevaluationIsBitIdentical) {
  Rng rng(13);
  const ReferenceMlp net = ReferenceMlp::random({4, 16, 4}, rng);
  const Tensor x = random_tensor(Shape{5, 4}, rng);
  Graph g;
  const NodeId in = g.input(x);
  const NodeId out = net.record(g, in);
  const NodeId jv = g.tangent(out, in, g.constant(x));
  g.sum(g.mul(jv, jv));
  const Tensor first = g.forward();
  const Gradients ga = g.backward(Tensor::scalar(1.0));
  const Tensor second = g.forward();
  const Gradients gb = g.backward(Tensor::scalar(1.0));
  EXPECT_EQ(first, second);
  for (std::size_t p = 0; p < ga.params.size(); ++p) EXPECT_EQ(ga.params[p], gb.params[p]);
}

TEST(GraphActivation, DerivativesMatchFiniteDifferences) {
  for (Activation act : {Activation::silu, Activation::tanh}) {
    for (int order = 0; order < 3; ++order) {
      for (double x : {-3.0, -0.4, 0.0, 0.9, 4.0}) {
        const double h = 1e-5;
        const double fd =
            (activation_value(act, order, x + h) - activation_value(act, order, x - h)) / (2 * h);
        EXPECT_NEAR(activation_value(act, order + 1, x), fd, 1e-7);
      }
    }
  }
}

// Random compositions of every primitive: reverse-mode gradients agree with
// central differences on at least 99% of entries.
TEST(GraphProperty, RandomCompositionsPassGradientCheck) {
  for (std::uint64_t trial = 0; trial < 12; ++trial) {
    Rng rng(100 + trial);
    const std::size_t rows = 1 + static_cast<std::size_t>(rng.uniform_int(0, 3));
    const std::size_t width = 2 + static_cast<std::size_t>(rng.uniform_int(0, 5));
    Graph g;
    const NodeId x = g.input(random_tensor(Shape{rows, width}, rng));
    NodeId h = x;
    NodeId skip = x;
    const long depth = rng.uniform_int(2, 6);
    for (long d = 0; d < depth; ++d) {
      switch (rng.uniform_int(0, 6)) {
        case 0: {
          const NodeId w = g.parameter(random_tensor(Shape{width, width}, rng, 0.5));
          h = g.affine(h, w, g.parameter(random_tensor(Shape{width}, rng)));
          break;
        }
        case 1:
          h = g.activation(h, rng.bernoulli(0.5) ? Activation::silu : Activation::tanh);
          break;
        case 2:
          h = g.mul(h, skip);
          break;
        case 3:
          h = g.sub(h, g.matmul(skip, g.parameter(random_tensor(Shape{width, width}, rng, 0.3))));
          break;
        case 4:
          h = g.mul_const(h, random_tensor(Shape{rows, width}, rng));
          break;
        case 5:
          h = g.add(g.scale(h, 0.5), skip);
          break;
        default:
          skip = h;
          break;
      }
    }
    const NodeId loss = rng.bernoulli(0.5) ? g.sum(g.row_sum(g.mul(h, h))) : g.sum(h);
    g.forward();
    const Gradients grads = g.backward(loss, Tensor::scalar(1.0));

    Tensor analytic(Shape{0});
    Tensor numeric(Shape{0});
    std::vector<double> a_all;
    std::vector<double> n_all;
    auto collect = [&](NodeId leaf, const Tensor& grad) {
      const Tensor fd = central_difference(g.value(leaf), [&](const Tensor& value) {
        Graph copy = g;
        copy.set_value(leaf, value);
        copy.forward();
        return copy.value(loss).item();
      });
      a_all.insert(a_all.end(), grad.data().begin(), grad.data().end());
      n_all.insert(n_all.end(), fd.data().begin(), fd.data().end());
    };
    for (std::size_t p = 0; p < g.parameters().size(); ++p) collect(g.parameters()[p], grads.params[p]);
    collect(x, grads.inputs[0]);
    EXPECT_GE(fraction_within(Tensor::vector(a_all), Tensor::vector(n_all), 1e-4), 0.99)
        << "trial " << trial;
  }
}

}  // namespace
}  // namespace gsure::ad
