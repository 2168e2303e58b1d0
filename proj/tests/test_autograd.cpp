#include <gtest/gtest.h>

#include "scfcrc/error.hpp"
#include "scfcrc/nn.hpp"
#include "test_util.hpp"

using namespace scfcrc;
using ag::Parameter;
using ag::Tape;
using ag::Var;

namespace {

constexpr double kTol = 1e-6;

struct Fixture {
  std::mt19937_64 rng{17};
  Parameter a{"a", testutil::random_matrix(4, 3, rng)};
  Parameter b{"b", testutil::random_matrix(4, 3, rng)};
  Parameter w{"w", testutil::random_matrix(5, 3, rng)};
  Parameter bias{"bias", testutil::random_matrix(1, 5, rng)};
  Matrix weights = testutil::random_matrix(4, 3, rng);
};

}  // namespace

TEST(Autograd, ElementwiseAndReductions) {
  Fixture f;
  auto loss = [&](Tape& t) {
    Var a = t.param(f.a), b = t.param(f.b);
    Var x = ag::add(ag::mul(a, b), ag::scale(ag::sub(a, b), 0.7));
    x = ag::add(ag::tanh(x), ag::relu(a));
    return ag::add(ag::sum_weighted(x, f.weights), ag::mean(ag::row_sum(x)));
  };
  EXPECT_LT(testutil::gradient_error({&f.a, &f.b}, loss), kTol);
}

TEST(Autograd, LinearAndMatmul) {
  Fixture f;
  auto loss = [&](Tape& t) {
    Var y = ag::linear(t.param(f.a), t.param(f.w), t.param(f.bias));
    Var z = ag::matmul_nt(y, ag::linear(t.param(f.b), t.param(f.w)));
    Var m = ag::matmul(z, t.param(f.a));
    return ag::sum_weighted(m, f.weights);
  };
  EXPECT_LT(testutil::gradient_error({&f.a, &f.b, &f.w, &f.bias}, loss), kTol);
}

TEST(Autograd, SoftmaxFamily) {
  Fixture f;
  auto loss = [&](Tape& t) {
    Var a = t.param(f.a);
    Var p = ag::softmax_rows(a);
    Var lp = ag::log_softmax_rows(t.param(f.b));
    Var lc = ag::log_clamped(p, 1e-12);
    return ag::add(ag::sum_weighted(lp, f.weights), ag::sum(ag::mul(p, lc)));
  };
  EXPECT_LT(testutil::gradient_error({&f.a, &f.b}, loss), kTol);
  Tape t;
  Var p = ag::softmax_rows(t.param(f.a));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p.value().row(i).sum(), 1.0, 1e-12);
}

TEST(Autograd, LogClampedBlocksGradientBelowEps) {
  Parameter x{"x", Matrix::Constant(1, 2, 1e-15)};
  x.value(0, 1) = 0.5;
  Tape t;
  Var v = t.param(x);
  t.backward(ag::sum(ag::log_clamped(v, 1e-12)));
  EXPECT_EQ(x.grad(0, 0), 0.0);
  EXPECT_NEAR(x.grad(0, 1), 2.0, 1e-12);
}

TEST(Autograd, LayerNormAndNormalize) {
  Fixture f;
  Parameter gamma{"g", testutil::random_matrix(1, 3, f.rng)};
  Parameter beta{"be", testutil::random_matrix(1, 3, f.rng)};
  auto loss = [&](Tape& t) {
    Var y = ag::layer_norm(t.param(f.a), t.param(gamma), t.param(beta));
    Var n = ag::normalize_rows(t.param(f.b));
    return ag::sum_weighted(ag::add(y, n), f.weights);
  };
  EXPECT_LT(testutil::gradient_error({&f.a, &f.b, &gamma, &beta}, loss), kTol);
}

TEST(Autograd, Attention) {
  std::mt19937_64 rng(3);
  // 2 sequences of 3 tokens, d_model 4, 2 heads.
  Parameter q{"q", testutil::random_matrix(6, 4, rng)};
  Parameter k{"k", testutil::random_matrix(6, 4, rng)};
  Parameter v{"v", testutil::random_matrix(6, 4, rng)};
  const Matrix w = testutil::random_matrix(6, 4, rng);
  auto loss = [&](Tape& t) { return ag::sum_weighted(ag::attention(t.param(q), t.param(k), t.param(v), 3, 2), w); };
  EXPECT_LT(testutil::gradient_error({&q, &k, &v}, loss), kTol);
}

TEST(Autograd, AttentionKeepsSequencesSeparate) {
  std::mt19937_64 rng(3);
  Matrix x = testutil::random_matrix(6, 4, rng);
  Tape t;
  Var base = ag::attention(t.constant(x), t.constant(x), t.constant(x), 3, 2);
  Matrix y = x;
  y.row(5) *= 3.0;
  Var changed = ag::attention(t.constant(y), t.constant(y), t.constant(y), 3, 2);
  EXPECT_TRUE(base.value().topRows(3) == changed.value().topRows(3));
  EXPECT_FALSE(base.value().bottomRows(3) == changed.value().bottomRows(3));
}

TEST(Autograd, GatherSpmmConcatColumns) {
  Fixture f;
  auto sp = std::make_shared<ag::SpMat>(2, 4);
  std::vector<Eigen::Triplet<double>> trip{{0, 1, 0.5}, {0, 3, 0.5}, {1, 0, 2.0}};
  sp->setFromTriplets(trip.begin(), trip.end());
  const Matrix w = testutil::random_matrix(3, 6, f.rng);
  auto loss = [&](Tape& t) {
    Var a = t.param(f.a);
    Var g = ag::gather_rows(a, {3, 0, 3});
    Var s = ag::spmm(sp, t.param(f.b));
    Var s3 = ag::gather_rows(s, {0, 1, 1});
    Var h = ag::hcat(g, s3);
    Var c3 = ag::mul_col(h, ag::gather_rows(ag::column(t.param(f.b), 2), {0, 1, 2}));
    return ag::sum_weighted(c3, w);
  };
  EXPECT_LT(testutil::gradient_error({&f.a, &f.b}, loss), kTol);
}

TEST(Autograd, MaskRedistribute) {
  Parameter a{"a", Matrix(2, 4)};
  a.value << 0.4, 0.3, 0.2, 0.1, 0.1, 0.2, 0.3, 0.4;
  Matrix mask = Matrix::Zero(2, 4);
  mask(0, 1) = 1;
  mask(1, 0) = mask(1, 3) = 1;
  Tape t;
  Var r = ag::mask_redistribute(t.param(a), mask);
  Matrix expect(2, 4);
  expect << 0.5, 0.0, 0.3, 0.2, 0.0, 0.45, 0.55, 0.0;
  EXPECT_LT((r.value() - expect).cwiseAbs().maxCoeff(), 1e-15);
  std::mt19937_64 rng(1);
  const Matrix w = testutil::random_matrix(2, 4, rng);
  EXPECT_LT(testutil::gradient_error({&a}, [&](Tape& t2) { return ag::sum_weighted(ag::mask_redistribute(t2.param(a), mask), w); }),
            kTol);
}

TEST(Autograd, DropoutIsIdentityAtZeroAndScalesOtherwise) {
  std::mt19937_64 rng(5);
  Tape t;
  Matrix x = Matrix::Ones(50, 40);
  Var same = ag::dropout(t.constant(x), 0.0, rng);
  EXPECT_TRUE(same.value() == x);
  Var d = ag::dropout(t.constant(x), 0.25, rng);
  for (Eigen::Index i = 0; i < d.value().size(); ++i) {
    const double v = d.value().data()[i];
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12);
  }
  EXPECT_NEAR(d.value().mean(), 1.0, 0.1);
}

TEST(Autograd, ShapeErrors) {
  Tape t;
  Var a = t.constant(Matrix::Zero(2, 3));
  Var b = t.constant(Matrix::Zero(3, 2));
  EXPECT_THROW(ag::add(a, b), ShapeError);
  EXPECT_THROW(ag::gather_rows(a, {2}), ShapeError);
  EXPECT_THROW(ag::hcat(a, b), ShapeError);
}

TEST(Nn, EncoderLayerGradient) {
  std::mt19937_64 rng(8);
  nn::EncoderLayer layer(4, 2, 8, 0.0, rng, "enc");
  nn::ParamList params;
  layer.collect(params);
  const Matrix x = testutil::random_matrix(6, 4, rng);
  const Matrix w = testutil::random_matrix(6, 4, rng);
  std::mt19937_64 drop(0);
  auto loss = [&](Tape& t) { return ag::sum_weighted(layer.forward(t, t.constant(x), 3, false, drop), w); };
  EXPECT_LT(testutil::gradient_error(params, loss), 1e-5);
}

TEST(Nn, EncoderRejectsIndivisibleHeads) {
  std::mt19937_64 rng(8);
  EXPECT_THROW(nn::EncoderLayer(6, 4, 8, 0.0, rng, "bad"), ConfigError);
}

TEST(Nn, AdamMinimizesQuadratic) {
  Parameter p{"p", Matrix::Constant(1, 3, 5.0)};
  nn::Adam opt({&p}, 0.1, 0.0);
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    Tape t;
    Var v = t.param(p);
    t.backward(ag::sum(ag::mul(v, v)));
    opt.step();
  }
  EXPECT_LT(p.value.cwiseAbs().maxCoeff(), 1e-2);
}

TEST(Nn, SnapshotRestoreAndHash) {
  std::mt19937_64 rng(2);
  nn::Mlp mlp({3, 4, 2}, nn::Activation::kRelu, 0.0, rng, "m");
  nn::ParamList params;
  mlp.collect(params);
  const auto snap = nn::snapshot(params);
  const uint64_t h = nn::parameter_hash(params);
  params[0]->value(0, 0) += 1.0;
  EXPECT_NE(nn::parameter_hash(params), h);
  nn::restore(params, snap);
  EXPECT_EQ(nn::parameter_hash(params), h);
}
