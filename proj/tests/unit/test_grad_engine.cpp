#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tabguide/diffusion.hpp"
#include "tabguide/errors.hpp"
#include "tabguide/grad_engine.hpp"

namespace tabguide {
namespace {

using testing::central_difference;
using testing::random_matrix;
using testing::relative_error;

// Builds a scalar from every unary and binary primitive so each adjoint is hit.
struct Composite {
  Matrix w;
  Matrix bias;

  ad::Var record(ad::Tape& tape, ad::Var x) const {
    ad::Var h = tape.add_bias(tape.matmul(x, tape.leaf_ref(w, false)), tape.leaf_ref(bias, false));
    ad::Var a = tape.swish(h);
    ad::Var b = tape.relu(tape.sub(h, tape.scale(a, 0.3)));
    ad::Var c = tape.sqrt(tape.add_scalar(tape.square(h), 1.0));
    ad::Var d = tape.abs(tape.add(b, c));
    ad::Var cat = tape.concat_cols(d, tape.slice_cols(a, 1, 2));
    ad::Var ls = tape.log_softmax_rows(cat);
    ad::Var rows = tape.add(tape.row_sum(ls), tape.row_max(cat));
    return tape.mul(tape.leaf(Matrix::Constant(1, 1, 0.7), false), tape.sum(rows));
  }

  double value(const Matrix& x) const {
    ad::Tape tape;
    return tape.value(record(tape, tape.leaf(x, false)))(0, 0);
  }
};

TEST(GradEngine, CompositeMatchesFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Composite f{random_matrix(rng, 3, 4), random_matrix(rng, 1, 4)};
    const Matrix x = random_matrix(rng, 5, 3);
    ad::Tape tape;
    ad::Var xv = tape.leaf(x, true);
    auto grads = tape.backward(f.record(tape, xv), Matrix::Ones(1, 1));
    const Matrix fd = central_difference([&](const Matrix& p) { return f.value(p); }, x);
    EXPECT_LE(relative_error(grads.of(xv), fd), 1e-6) << "trial " << trial;
  }
}

TEST(GradEngine, BackwardIsLinearInTheAdjoint) {
  Rng rng(3);
  const Matrix w = random_matrix(rng, 4, 3);
  const Matrix x = random_matrix(rng, 6, 4);
  const Matrix u = random_matrix(rng, 6, 3);
  const Matrix v = random_matrix(rng, 6, 3);
  auto vjp = [&](const Matrix& adj) {
    ad::Tape tape;
    ad::Var xv = tape.leaf(x, true);
    ad::Var y = tape.swish(tape.matmul(xv, tape.leaf_ref(w, false)));
    return Matrix(tape.backward(y, adj).of(xv));
  };
  const Matrix combined = vjp(2.0 * u - 3.0 * v);
  EXPECT_LE((combined - (2.0 * vjp(u) - 3.0 * vjp(v))).norm(), 1e-12);
}

TEST(GradEngine, FanOutAccumulates) {
  ad::Tape tape;
  ad::Var x = tape.leaf(Matrix::Constant(1, 1, 3.0), true);
  ad::Var y = tape.add(tape.mul(x, x), x);
  auto g = tape.backward(y, Matrix::Ones(1, 1));
  EXPECT_DOUBLE_EQ(g.of(x)(0, 0), 7.0);
}

TEST(GradEngine, LeavesWithoutGradReportZero) {
  ad::Tape tape;
  ad::Var a = tape.leaf(Matrix::Ones(2, 2), false);
  ad::Var b = tape.leaf(Matrix::Ones(2, 2), true);
  auto g = tape.backward(tape.sum(tape.add(a, b)), Matrix::Ones(1, 1));
  EXPECT_TRUE(g.of(a).isZero());
  EXPECT_TRUE(g.of(b).isOnes());
}

TEST(GradEngine, KinkSubgradientsAreZero) {
  ad::Tape tape;
  ad::Var x = tape.leaf(Matrix::Zero(1, 3), true);
  ad::Var y = tape.add(tape.sum(tape.relu(x)), tape.add(tape.sum(tape.abs(x)), tape.sum(tape.sqrt(x))));
  auto g = tape.backward(y, Matrix::Ones(1, 1));
  EXPECT_TRUE(g.of(x).isZero());
}

TEST(GradEngine, RowMaxRoutesToFirstMaximum) {
  ad::Tape tape;
  Matrix m(1, 3);
  m << 2.0, 5.0, 5.0;
  ad::Var x = tape.leaf(m, true);
  auto g = tape.backward(tape.row_max(x), Matrix::Ones(1, 1));
  EXPECT_DOUBLE_EQ(g.of(x)(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(g.of(x)(0, 2), 0.0);
}

TEST(GradEngine, BackwardVisitsInReverseOrder) {
  ad::Tape tape;
  ad::Var x = tape.leaf(Matrix::Ones(1, 2), true);
  ad::Var y = tape.square(x);
  ad::Var s = tape.sum(y);
  tape.backward(s, Matrix::Ones(1, 1));
  const auto& order = tape.last_backward_order();
  ASSERT_FALSE(order.empty());
  for (std::size_t i = 1; i < order.size(); ++i) EXPECT_GT(order[i - 1], order[i]);
  EXPECT_EQ(order.front(), s.id);
}

TEST(GradEngine, TapeIsSingleUse) {
  ad::Tape tape;
  ad::Var x = tape.leaf(Matrix::Ones(1, 1), true);
  ad::Var y = tape.square(x);
  tape.backward(y, Matrix::Ones(1, 1));
  EXPECT_TRUE(tape.consumed());
  EXPECT_THROW(tape.backward(y, Matrix::Ones(1, 1)), UsageError);
  EXPECT_THROW(tape.square(x), UsageError);
}

TEST(GradEngine, ShapeErrorsAreReported) {
  ad::Tape tape;
  ad::Var a = tape.leaf(Matrix::Ones(2, 3), false);
  ad::Var b = tape.leaf(Matrix::Ones(2, 2), false);
  EXPECT_THROW(tape.matmul(a, a), DimensionError);
  EXPECT_THROW(tape.add(a, b), DimensionError);
  EXPECT_THROW(tape.slice_cols(a, 2, 2), DimensionError);
  EXPECT_THROW(tape.backward(a, Matrix::Ones(1, 1)), DimensionError);
}

TEST(GradEngine, ForeignVarIsRejected) {
  ad::Tape one;
  ad::Tape two;
  one.leaf(Matrix::Ones(1, 1), false);
  ad::Var v = one.leaf(Matrix::Ones(1, 1), false);
  EXPECT_THROW(two.square(v), UsageError);
}

TEST(GradEngine, TapedForwardMatchesKernels) {
  Rng rng(11);
  const Matrix x = random_matrix(rng, 4, 6);
  ad::Tape tape;
  ad::Var v = tape.leaf(x, false);
  EXPECT_EQ(tape.value(tape.swish(v)), ad::kernels::swish(x));
  EXPECT_EQ(tape.value(tape.log_softmax_rows(v)), ad::kernels::log_softmax_rows(x));
}

TEST(GradEngine, LogSoftmaxIsStableForLargeInputs) {
  Matrix x(1, 3);
  x << 1000.0, 1000.0, -1000.0;
  const Matrix ls = ad::kernels::log_softmax_rows(x);
  EXPECT_TRUE(all_finite(ls));
  EXPECT_NEAR(ls(0, 0), -std::log(2.0), 1e-12);
}

TEST(GradEngine, SinusoidalEmbeddingLayout) {
  const int steps[] = {0, 7};
  const Matrix e = ad::kernels::sinusoidal_embedding(steps, 4);
  ASSERT_EQ(e.cols(), 4);
  EXPECT_DOUBLE_EQ(e(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(e(0, 2), 1.0);
  EXPECT_NEAR(e(1, 0), std::sin(7.0), 1e-15);
  EXPECT_NEAR(e(1, 1), std::sin(7.0 * 0.01), 1e-15);
  EXPECT_THROW(ad::kernels::sinusoidal_embedding(steps, 3), ConfigError);
}

TEST(GradEngine, DenoiserParameterGradientsMatchFiniteDifferences) {
  DenoiserConfig cfg{3, 6, 5, 4};
  DenoiserNet net(cfg, 5);
  Rng rng(2);
  const Matrix x = random_matrix(rng, 4, 3);
  const Matrix target = random_matrix(rng, 4, 3);
  const std::vector<int> steps{1, 50, 120, 200};
  auto loss_of = [&](const DenoiserNet& n) {
    return (n.predict(x, steps) - target).squaredNorm();
  };
  ad::Tape tape;
  auto rec = net.record_trainable(tape, tape.leaf(x, false), steps);
  ad::Var diff = tape.sub(rec.output, tape.leaf(target, false));
  auto grads = tape.backward(tape.sum(tape.square(diff)), Matrix::Ones(1, 1));
  ASSERT_EQ(rec.params.size(), net.parameters().size());
  for (std::size_t p = 0; p < rec.params.size(); ++p) {
    DenoiserNet probe = net;
    const Matrix fd = central_difference(
        [&](const Matrix& w) {
          probe.parameters()[p] = w;
          return loss_of(probe);
        },
        net.parameters()[p]);
    EXPECT_LE(relative_error(grads.of(rec.params[p]), fd), 1e-6) << net.parameter_names()[p];
  }
}

}  // namespace
}  // namespace tabguide
