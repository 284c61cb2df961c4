// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "coslearn/autodiff.hpp"
#include "coslearn/embeddings.hpp"
#include "coslearn/error.hpp"
#include "coslearn/gradcheck.hpp"
#include "coslearn/losses.hpp"
#include "coslearn/random.hpp"

namespace coslearn {
namespace {

void expect_tensor_near(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = rng.uniform(-2.0, 2.0);
  return t;
}

TEST(Matmul, IdentityCase) {
  const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  EXPECT_EQ(kernels::matmul(Tensor::identity(2), b), b);
}

TEST(Matmul, HandArithmetic) {
  EXPECT_EQ(kernels::matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})), Tensor::matrix({{11}}));
}

TEST(Matmul, ZeroAnnihilates) {
  Rng rng(1);
  const Tensor out = kernels::matmul(Tensor(Shape{2, 3}), random_tensor({3, 2}, rng));
  EXPECT_EQ(out, Tensor(Shape{2, 2}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    (void)kernels::matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2x3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(2x3)", msg.find("(2x3)") + 1), std::string::npos) << msg;
  }
}

TEST(Matmul, TransposedVariantsAgreeWithTripleLoop) {
  Rng rng(7);
  const Tensor a = random_tensor({4, 3}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({5, 3}, rng);
  Tensor tn(Shape{3, 5}), nt(Shape{4, 5});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      for (std::size_t k = 0; k < 4; ++k) tn.at(i, j) += a.at(k, i) * b.at(k, j);
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      for (std::size_t k = 0; k < 3; ++k) nt.at(i, j) += a.at(i, k) * c.at(j, k);
    }
  }
  expect_tensor_near(kernels::matmul_tn(a, b), tn, 1e-12);
  expect_tensor_near(kernels::matmul_nt(a, c), nt, 1e-12);
}

TEST(L2Normalize, Examples) {
  expect_tensor_near(kernels::l2_normalize(Tensor::vector({3, 4})), Tensor::vector({0.6, 0.8}), 1e-15);
  EXPECT_EQ(kernels::l2_normalize(Tensor::vector({1, 0, 0})), Tensor::vector({1, 0, 0}));
  EXPECT_THROW((void)kernels::l2_normalize(Tensor::vector({0, 0})), DegenerateVectorError);
}

TEST(L2Normalize, UnitNormAndScaleInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor x = random_tensor({3, 5}, rng);
    const Tensor y = kernels::l2_normalize(x);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(l2_norm(y.row(r)), 1.0, 1e-12);
    const double alpha = std::exp(rng.uniform(-10.0, 10.0));
    Tensor scaled = x;
    for (double& v : scaled.data()) v *= alpha;
    expect_tensor_near(kernels::l2_normalize(scaled), y, 1e-12);
  }
}

TEST(Softmax, Examples) {
  expect_tensor_near(kernels::softmax(Tensor::vector({0, 0})), Tensor::vector({0.5, 0.5}), 1e-15);
  for (double c : {-700.0, 0.0, 3.5, 800.0}) {
    expect_tensor_near(kernels::softmax(Tensor::vector({c, c, c, c})), Tensor::vector({0.25, 0.25, 0.25, 0.25}),
                       1e-15);
  }
  expect_tensor_near(kernels::softmax(Tensor::vector({std::log(1.0), std::log(3.0)})),
                     Tensor::vector({0.25, 0.75}), 1e-15);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor z = random_tensor({2, 6}, rng);
    for (double& v : z.data()) v *= 20.0;
    const Tensor p = kernels::softmax(z);
    for (std::size_t r = 0; r < 2; ++r) {
      double s = 0.0;
      for (double v : p.row(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    const double shift = rng.uniform(-50.0, 50.0);
    Tensor shifted = z;
    for (double& v : shifted.data()) v += shift;
    expect_tensor_near(kernels::softmax(shifted), p, 1e-12);
  }
}

TEST(Softmax, RejectsNonFinite) {
  EXPECT_THROW((void)kernels::softmax(Tensor::vector({0, NAN})), NumericError);
  EXPECT_THROW((void)kernels::log_softmax(Tensor::vector({INFINITY, 0})), NumericError);
}

TEST(LogSoftmax, StableForLargeLogits) {
  const Tensor y = kernels::log_softmax(Tensor::vector({1000, 0}));
  EXPECT_NEAR(y[0], 0.0, 1e-300);
  EXPECT_NEAR(y[1], -1000.0, 1e-9);
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  Var p = tape.parameter(Tensor::vector({0.3, -1, 2}));
  tape.backward(ops::sum(p));
  EXPECT_EQ(p.grad(), Tensor::vector({1, 1, 1}));
}

TEST(Backward, SelfDotGivesTwiceInput) {
  Tape tape;
  Var p = tape.parameter(Tensor::vector({1, 2}));
  tape.backward(ops::dot(p, p));
  EXPECT_EQ(p.grad(), Tensor::vector({2, 4}));
}

TEST(Backward, CosineLossAtMinimumHasNoOrthogonalGradient) {
  const EmbeddingMatrix e = onehot_embeddings(3);
  const std::vector<std::size_t> labels{1};
  Tape tape;
  Var f = tape.parameter(Tensor::matrix({{0, 2.5, 0}}));
  tape.backward(cosine_loss(f, e.gather(labels)));
  for (double g : f.grad().data()) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(Backward, NonScalarLossIsRejected) {
  Tape tape;
  Var p = tape.parameter(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(ops::exp(p)), DimensionError);
}

TEST(Backward, RepeatedPassesAreIdentical) {
  Tape tape;
  Rng rng(11);
  Var x = tape.constant(random_tensor({4, 3}, rng));
  Var w = tape.parameter(random_tensor({3, 2}, rng));
  Var b = tape.parameter(random_tensor({2}, rng));
  Var loss = ops::mean(ops::log_softmax(ops::linear(x, w, b)));
  tape.backward(loss);
  const Tensor gw = w.grad(), gb = b.grad();
  tape.backward(loss);
  EXPECT_EQ(w.grad(), gw);
  EXPECT_EQ(b.grad(), gb);
}

TEST(Backward, EveryParameterGetsSameShapeGradient) {
  Tape tape;
  Var used = tape.parameter(Tensor::matrix({{1, 2}, {3, 4}}));
  Var unused = tape.parameter(Tensor(Shape{3, 5}, 1.0));
  tape.backward(ops::sum(ops::relu(used)));
  EXPECT_EQ(used.grad().shape(), used.shape());
  EXPECT_EQ(unused.grad(), Tensor(Shape{3, 5}));
}

TEST(Backward, GradientsAccumulateOverSharedUses) {
  Tape tape;
  Var p = tape.parameter(Tensor::vector({1, -2}));
  // sum(p) + sum(3 p) + sum(p * p)
  Var loss = ops::add(ops::add(ops::sum(p), ops::sum(ops::scale(p, 3.0))), ops::sum(ops::mul(p, p)));
  tape.backward(loss);
  EXPECT_EQ(p.grad(), Tensor::vector({6, 0}));
}

TEST(Ops, LogRejectsNonPositive) {
  Tape tape;
  EXPECT_THROW((void)ops::log(tape.constant(Tensor::vector({1, 0}))), NumericError);
}

TEST(Ops, MixingTapesIsRejected) {
  Tape t1, t2;
  Var a = t1.parameter(Tensor::vector({1}));
  Var b = t2.parameter(Tensor::vector({1}));
  EXPECT_ANY_THROW((void)ops::add(a, b));
}

TEST(Ops, SliceAndConcatRoundTrip) {
  Tape tape;
  Var x = tape.constant(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  const Var parts[] = {ops::slice_rows(x, 0, 1), ops::slice_rows(x, 1, 3)};
  EXPECT_EQ(ops::concat_rows(parts).value(), x.value());
  EXPECT_THROW((void)ops::slice_rows(x, 2, 4), DimensionError);
}

// Finite-difference suite over every op, loss and the MLP.
TEST(GradCheck, AllStandardCasesPass) {
  for (const auto& c : standard_gradcheck_cases()) {
    const GradCheckResult r = gradcheck_case(c, {.trials = 100, .seed = 2024});
    EXPECT_TRUE(r.passed) << c.name << " max rel error " << r.max_rel_error;
    EXPECT_EQ(r.trials, 100u);
  }
}

TEST(GradCheck, DetectsWrongBackwardRule) {
  // exp with the derivative of x^2/2 instead of exp.
  GradCheckCase wrong{"broken_exp",
                      {{3}},
                      [](Tape& t, std::span<const Var> v) {
                        Tensor out = v[0].value();
                        for (double& x : out.data()) x = std::exp(x);
                        const std::size_t in = v[0].id();
                        return t.record(std::move(out), {in}, [in](Tape& tp, std::size_t, const Tensor& g) {
                          Tensor& gi = tp.grad_of(in);
                          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * tp.value(in)[i];
                        });
                      },
                      {}};
  const GradCheckResult r = gradcheck_case(wrong, {.trials = 100});
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_rel_error, 1e-2);
}

}  // namespace
}  // namespace coslearn
