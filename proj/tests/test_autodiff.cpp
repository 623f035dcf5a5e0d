#include <gtest/gtest.h>

#include <random>

#include "denseseg/core/gradcheck.hpp"
#include "denseseg/core/ops.hpp"
#include "denseseg/nn/activation.hpp"

using namespace dseg;

namespace {

using D = BasicTensor<double>;

D random_d(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto t = D::zeros(s);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST(Tensor, FactoriesAndShape) {
  auto t = Tensor::full({2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  for (float v : t.data()) EXPECT_EQ(v, 1.5f);
  EXPECT_THROW(Tensor::zeros({2, 0}), ShapeError);
  EXPECT_THROW(Tensor::zeros({}), ShapeError);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(t.item(), ShapeError);
  EXPECT_EQ(Tensor::scalar(4.f).item(), 4.f);
}

TEST(Tensor, CloneAndDetachCopyStorage) {
  auto t = Tensor::from({2}, {1, 2});
  t.set_requires_grad(true);
  auto c = t.clone();
  c[0] = 9;
  EXPECT_EQ(t[0], 1.f);
  auto d = t.detach();
  EXPECT_FALSE(d.requires_grad());
  EXPECT_FALSE(d.same_storage(t));
}

TEST(Tape, SumGradIsOnes) {
  auto x = Tensor::from({2, 2}, {1, -2, 3, 4});
  x.set_requires_grad(true);
  backward(sum(x));
  ASSERT_TRUE(x.has_grad());
  for (float g : x.grad()) EXPECT_EQ(g, 1.f);
}

TEST(Tape, SquareGrad) {
  auto x = Tensor::from({2}, {1, 2});
  x.set_requires_grad(true);
  backward(sum(x * x));
  EXPECT_FLOAT_EQ(x.grad()[0], 2.f);
  EXPECT_FLOAT_EQ(x.grad()[1], 4.f);
}

TEST(Tape, FanOutAccumulates) {
  auto x = random_d({2, 3}, 1);
  auto branch_a = [&] { return sum(x * x); };
  auto branch_b = [&] { return sum(x * 3.0); };

  x.set_requires_grad(true);
  backward(branch_a());
  std::vector<double> ga(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(branch_b());
  std::vector<double> gb(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(branch_a() + branch_b());
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(x.grad()[i], ga[i] + gb[i], 1e-12);

  auto r = grad_check<double>([&] { return branch_a() + branch_b(); }, {x});
  EXPECT_TRUE(r.pass) << r.max_rel_err;
}

TEST(Tape, MultiConsumerEqualsSumOfSingleConsumers) {
  auto x = random_d({4}, 2);
  x.set_requires_grad(true);
  const int m = 3;
  std::vector<double> expected(4, 0.0);
  for (int k = 1; k <= m; ++k) {
    x.zero_grad();
    backward(sum(x * x * static_cast<double>(k)));
    for (int i = 0; i < 4; ++i) expected[i] += x.grad()[i];
  }
  x.zero_grad();
  auto total = sum(x * x * 1.0) + sum(x * x * 2.0) + sum(x * x * 3.0);
  backward(total);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(x.grad()[i], expected[i], 1e-12);
}

TEST(Tape, RejectsNonScalarLoss) {
  auto x = Tensor::from({2}, {1, 2});
  x.set_requires_grad(true);
  auto y = x * x;
  EXPECT_THROW(backward(y), ShapeError);
  Tape<float>::current().clear();
}

TEST(Tape, RejectsDetachedLoss) {
  auto x = Tensor::from({2}, {1, 2});
  EXPECT_THROW(backward(sum(x)), ShapeError);
  x.set_requires_grad(true);
  auto l = sum(x);
  Tape<float>::current().clear();
  EXPECT_EQ(backward(l), 0u);
  EXPECT_FALSE(x.has_grad());
}

TEST(Tape, NoGradGuardRecordsNothing) {
  auto x = Tensor::from({2}, {1, 2});
  x.set_requires_grad(true);
  {
    NoGradGuard<> g;
    auto y = sum(x * x);
    EXPECT_EQ(Tape<float>::current().size(), 0u);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(Tape<float>::current().enabled());
}

TEST(Tape, BackwardClearsTape) {
  auto x = Tensor::from({2}, {1, 2});
  x.set_requires_grad(true);
  backward(sum(x * x));
  EXPECT_EQ(Tape<float>::current().size(), 0u);
}

TEST(Tape, RetainGradKeepsIntermediate) {
  auto x = Tensor::from({2}, {1, 2});
  x.set_requires_grad(true);
  auto y = x * x;
  y.retain_grad();
  auto z = x * x;
  backward(sum(y) + sum(z));
  EXPECT_TRUE(y.has_grad());
  EXPECT_FALSE(z.has_grad());
}

TEST(Ops, MaxTieRoutesToFirst) {
  auto a = Tensor::from({3}, {1, 2, 3});
  auto b = Tensor::from({3}, {1, 5, 0});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  backward(sum(elementwise(a, b, BinaryKind::max)));
  EXPECT_EQ(a.grad()[0], 1.f);
  EXPECT_EQ(b.grad()[0], 0.f);
  EXPECT_EQ(b.grad()[1], 1.f);
  EXPECT_EQ(a.grad()[2], 1.f);
}

TEST(Ops, ShapeMismatchThrows) {
  EXPECT_THROW(Tensor::zeros({2}) + Tensor::zeros({3}), ShapeError);
}

TEST(Ops, MeanValueAndGrad) {
  auto x = Tensor::from({4}, {1, 2, 3, 6});
  x.set_requires_grad(true);
  auto m = mean(x);
  EXPECT_FLOAT_EQ(m.item(), 3.f);
  backward(m);
  for (float g : x.grad()) EXPECT_FLOAT_EQ(g, 0.25f);
}

TEST(Ops, ConcatThenSliceIsBitExact) {
  auto a = Tensor::from({1, 2, 1, 1, 2}, {1.1f, 2.2f, 3.3f, 4.4f});
  auto b = Tensor::from({1, 1, 1, 1, 2}, {-7.f, 8.5f});
  auto c = concat_channels<float>({a, b});
  ASSERT_EQ(c.shape(), (Shape{1, 3, 1, 1, 2}));
  auto sa = slice_channels(c, 0, 2);
  auto sb = slice_channels(c, 2, 3);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(sa[i], a[i]);
  for (std::size_t i = 0; i < b.numel(); ++i) EXPECT_EQ(sb[i], b[i]);
}

TEST(Ops, ConcatRejectsMismatchedSpatial) {
  EXPECT_THROW(concat_channels<float>({Tensor::zeros({1, 1, 2, 2, 2}), Tensor::zeros({1, 1, 2, 2, 3})}),
               ShapeError);
}

TEST(GradCheck, SumIsExact) {
  auto x = random_d({3, 4}, 3);
  auto r = grad_check<double>([&] { return sum(x); }, {x});
  EXPECT_LT(r.max_rel_err, 1e-6);
  EXPECT_TRUE(r.pass);
}

TEST(GradCheck, ReluOffKink) {
  auto x = Tensor::from({6}, {0.5f, -0.7f, 1.2f, -0.3f, 0.9f, -1.1f});
  auto r = grad_check<float>([&] { return sum(relu(x)); }, {x});
  EXPECT_TRUE(r.pass) << r.max_rel_err;
  EXPECT_EQ(r.skipped, 0u);
}

TEST(GradCheck, ProbesAcrossKinkAreSkipped) {
  auto x = BasicTensor<double>::from({3}, {0.5, 1e-5, -0.5});
  auto r = grad_check<double>([&] { return sum(relu(x)); }, {x});
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.checked, 2u);
  EXPECT_TRUE(r.pass);
}

namespace {

// Square op whose backward rule is deliberately off by a factor of 1.5.
D broken_square(const D& x) {
  auto out = D::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * x[i];
  auto& tape = Tape<double>::current();
  if (tape.wants({&x})) {
    auto nx = x.node();
    tape.record("broken_square", {x}, out, [nx](std::span<const double> g) {
      auto gx = detail::grad_sink(nx);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 3.0 * nx->data[i] * g[i];
    });
  }
  return out;
}

}  // namespace

TEST(GradCheck, CorruptedRuleFails) {
  auto x = random_d({5}, 4);
  auto r = grad_check<double>([&] { return sum(broken_square(x)); }, {x});
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.max_rel_err, 0.1);
}

TEST(GradCheck, NonScalarThrows) {
  auto x = random_d({2}, 5);
  EXPECT_THROW(grad_check<double>([&] { return x * x; }, {x}), ShapeError);
  Tape<double>::current().clear();
}

TEST(Numeric, NonFiniteOutputThrows) {
  auto x = Tensor::from({1}, {std::numeric_limits<float>::max()});
  EXPECT_THROW(x * 10.f, NumericError);
}
