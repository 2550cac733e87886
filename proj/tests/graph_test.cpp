#include "qamatch/graph.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "qamatch/rng.hpp"
#include "qamatch/tensor.hpp"
#include "test_util.hpp"

using namespace qamatch;
using nn::Graph;
using nn::Parameter;
using nn::ParameterSet;
using nn::Tensor;
using nn::Value;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SubstreamsDifferAndAreStable) {
  Rng base(7);
  Rng s1 = base.substream("shuffle");
  Rng s2 = base.substream("dropout");
  EXPECT_NE(s1.seed(), s2.seed());
  EXPECT_EQ(base.substream("shuffle").seed(), s1.seed());
}

TEST(Softmax, UniformOnEqualLogits) {
  Graph g;
  Value y = g.softmax(g.input(Tensor::vec({0.0, 0.0})));
  EXPECT_DOUBLE_EQ(g.value(y)[0], 0.5);
  EXPECT_DOUBLE_EQ(g.value(y)[1], 0.5);
}

TEST(Softmax, SumsToOneAndPositive) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> xs(n);
    for (double& x : xs) x = rng.uniform(-30.0, 30.0);
    Graph g;
    const Tensor& y = g.value(g.softmax(g.input(Tensor::vec(xs))));
    double sum = 0.0;
    for (double v : y.data) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0 + 1e-15);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(CrossEntropy, EqualLogitsGiveLn2) {
  Graph g;
  Value l = g.cross_entropy(g.input(Tensor::vec({0.0, 0.0})), 0);
  EXPECT_NEAR(g.value(l)[0], std::log(2.0), 1e-12);
}

TEST(Dropout, EvalModeIsIdentity) {
  Rng rng(1);
  Graph g(false, &rng);
  Value x = g.input(Tensor::vec({1.0, -2.0, 3.0}));
  Value y = g.dropout(x, 0.3);
  EXPECT_EQ(x.id, y.id);
}

TEST(Dropout, PreservesExpectation) {
  // Inverted dropout on a ones-vector: the mean over many applications
  // stays within 1% of 1.
  Rng rng(99);
  const std::size_t n = 1000;
  double sum = 0.0;
  std::size_t count = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Graph g(true, &rng);
    Value y = g.dropout(g.input(Tensor(std::vector<std::size_t>{n},
                                       std::vector<double>(n, 1.0))),
                        0.3);
    for (double v : g.value(y).data) sum += v;
    count += n;
  }
  EXPECT_NEAR(sum / static_cast<double>(count), 1.0, 0.01);
}

TEST(Dropout, BackwardUsesTheForwardMask) {
  Rng rng(5);
  Graph g(true, &rng);
  Value x = g.input(Tensor::vec(std::vector<double>(32, 1.0)));
  Value y = g.dropout(x, 0.5);
  Value s = g.dot(y, g.input(Tensor::vec(std::vector<double>(32, 1.0))));
  g.backward(s);
  // With x = 1, the forward output is the mask itself; dx must equal it.
  const Tensor& mask = g.value(y);
  const Tensor& dx = g.grad_of(x);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_DOUBLE_EQ(dx[i], mask[i]);
}

TEST(Dropout, RejectsBadProbability) {
  Graph g;
  Value x = g.input(Tensor::vec({1.0}));
  EXPECT_THROW(g.dropout(x, 1.0), std::invalid_argument);
  EXPECT_THROW(g.dropout(x, -0.1), std::invalid_argument);
}

TEST(Shapes, MismatchReportsBothShapes) {
  Graph g;
  Value a = g.input(Tensor::zeros({2, 3}));
  Value b = g.input(Tensor::zeros({4}));
  try {
    g.matmul(a, b);
    FAIL() << "expected shape error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4]"), std::string::npos) << msg;
  }
}

TEST(Backward, SumOfMatVecHasOuterProductGradient) {
  // loss = sum(W x) with x fixed: d loss / d W[i][j] = x[j].
  ParameterSet ps;
  Parameter& W = ps.add("W", {3, 2});
  Rng rng(11);
  nn::init_uniform_fan_in(W, 2, rng);
  Graph g;
  Value y = g.matmul(g.param(W), g.input(Tensor::vec({0.5, -1.5})));
  Value loss = g.dot(y, g.input(Tensor::vec({1.0, 1.0, 1.0})));
  g.backward(loss);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(W.grad.at(i, 0), 0.5);
    EXPECT_DOUBLE_EQ(W.grad.at(i, 1), -1.5);
  }
}

TEST(Backward, DeterministicAcrossIdenticalRuns) {
  auto run = [](std::vector<double>* grads) {
    ParameterSet ps;
    Parameter& W = ps.add("W", {4, 4});
    Rng rng(21);
    nn::init_uniform_fan_in(W, 4, rng);
    Graph g;
    Value h = g.tanh(g.matmul(g.param(W), g.input(Tensor::vec({1.0, 2.0, 3.0, 4.0}))));
    g.backward(g.cross_entropy(g.slice(h, 0, 2), 1));
    *grads = W.grad.data;
  };
  std::vector<double> g1, g2;
  run(&g1);
  run(&g2);
  EXPECT_EQ(g1, g2);
}

TEST(Backward, UnusedParametersKeepZeroGradients) {
  ParameterSet ps;
  Parameter& used = ps.add("used", {2});
  Parameter& unused = ps.add("unused", {3});
  used.value = Tensor::vec({0.4, -0.6});
  unused.value = Tensor::vec({1.0, 2.0, 3.0});
  ps.zero_grad();
  Graph g;
  g.backward(g.dot(g.param(used), g.input(Tensor::vec({1.0, 1.0}))));
  EXPECT_NE(used.grad[0], 0.0);
  for (double v : unused.grad.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  Graph g;
  Value v = g.input(Tensor::vec({1.0, 2.0}));
  EXPECT_THROW(g.backward(v), std::invalid_argument);
}

// Finite-difference checks for each primitive, 50 random draws spread over
// the op set.
TEST(GradCheck, PrimitiveOps) {
  Rng rng(1234);
  double worst = 0.0;
  for (int draw = 0; draw < 50; ++draw) {
    ParameterSet ps;
    Parameter& W = ps.add("W", {3, 4});
    Parameter& u = ps.add("u", {4});
    Parameter& v = ps.add("v", {3});
    Parameter& w2 = ps.add("w2", {3});
    nn::init_uniform_fan_in(W, 4, rng);
    for (std::size_t i = 0; i < 4; ++i) u.value[i] = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < 3; ++i) v.value[i] = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < 3; ++i) w2.value[i] = rng.uniform(-1, 1);
    const int target = static_cast<int>(rng.below(2));

    auto build = [&](Graph& g) {
      Value h = g.matmul(g.param(W), g.param(u));      // matmul
      Value t = g.tanh(h);                             // tanh
      Value s = g.sigmoid(g.mul(t, g.param(v)));       // mul, sigmoid
      Value c = g.concat(s, g.slice(g.param(w2), 0, 2));  // concat, slice
      Value sm = g.softmax(c);                         // softmax
      Value items[2] = {g.add(t, g.param(v)), g.param(w2)};  // add
      Value ws = g.weighted_sum(g.slice(sm, 0, 2),
                                std::span<const Value>(items, 2));
      Value d = g.dot(ws, g.param(v));                 // dot
      Value logits = g.concat(d, g.dot(s, s));
      return g.cross_entropy(logits, target);          // cross_entropy
    };

    ps.zero_grad();
    Graph g;
    g.backward(build(g));
    const double err = testutil::max_grad_error(ps, [&]() {
      Graph eg;
      return eg.value(build(eg))[0];
    });
    worst = std::max(worst, err);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(GradCheck, ScaleAndAccumulatedReuse) {
  // One parameter used on several paths: gradients must accumulate.
  ParameterSet ps;
  Parameter& p = ps.add("p", {3});
  Rng rng(77);
  for (std::size_t i = 0; i < 3; ++i) p.value[i] = rng.uniform(-1, 1);
  auto build = [&](Graph& g) {
    Value a = g.param(p);
    Value b = g.scale(a, 2.5);
    return g.dot(g.add(a, b), g.tanh(a));
  };
  ps.zero_grad();
  Graph g;
  g.backward(build(g));
  const double err = testutil::max_grad_error(ps, [&]() {
    Graph eg;
    return eg.value(build(eg))[0];
  });
  EXPECT_LT(err, 1e-4);
}
