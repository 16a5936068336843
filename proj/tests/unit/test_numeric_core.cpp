#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gradcheck.hpp"
#include "random.hpp"
#include "token2vec/errors.hpp"
#include "token2vec/ops.hpp"

namespace token2vec {
namespace {

using testing::check_gradient;
using testing::random_tensor;

// Simpson's rule on the standard normal density, independent of std::erf.
double phi_by_integration(double x) {
  const int n = 200000;
  const double a = -12.0, h = (x - a) / n;
  auto f = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
  double s = f(a) + f(x);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Weighted sum so that every output element gets a distinct upstream gradient.
Tensor weighted_sum(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

TEST(Matmul, IdentityAndHandComputation) {
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  const Tensor c = matmul(eye, b);
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{3, 4, 5, 6}));
  EXPECT_DOUBLE_EQ(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})).item(), 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor(Shape{2, 3}), Tensor(Shape{4, 5}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  Tensor a = random_tensor({5, 7}, rng, 1.0, true);
  Tensor b = random_tensor({7, 3}, rng, 1.0, true);
  GradTape tape;
  tape.backward(sum(matmul(a, b)));
  auto loss = [&] { return sum(matmul(a, b)).item(); };
  EXPECT_LT(check_gradient(a, a.grad(), loss).max_rel_error, 1e-6);
  EXPECT_LT(check_gradient(b, b.grad(), loss).max_rel_error, 1e-6);
}

TEST(LayerNorm, Examples) {
  const Tensor ones = Tensor::vector({1, 1, 1, 1});
  const Tensor zeros = Tensor::vector({0, 0, 0, 0});
  const Tensor y = layer_norm(Tensor::matrix({{5, 5, 5, 5}}), ones, zeros);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
  const Tensor z = layer_norm(Tensor::matrix({{1, -1}}), Tensor::vector({1, 1}), Tensor::vector({0, 0}), 1e-12);
  EXPECT_NEAR(z[0], 1.0, 1e-9);
  EXPECT_NEAR(z[1], -1.0, 1e-9);
}

TEST(LayerNorm, ZeroWidthIsDimensionError) {
  EXPECT_THROW(layer_norm(Tensor(Shape{3, 0}), Tensor(Shape{0}), Tensor(Shape{0})), DimensionError);
}

TEST(LayerNorm, RandomRowsAreStandardized) {
  std::mt19937_64 rng(2);
  const std::size_t d = 16;
  const Tensor x = random_tensor({8, d}, rng, 3.0);
  const Tensor y = layer_norm(x, Tensor::vector(std::vector<double>(d, 1.0)), Tensor::vector(std::vector<double>(d, 0.0)));
  for (std::size_t r = 0; r < 8; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += y.at(r, c);
    mean /= d;
    for (std::size_t c = 0; c < d; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
    var /= d;
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(LayerNorm, InvariantToConstantShift) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({4, 10}, rng);
  Tensor shifted = x.clone();
  for (auto& v : shifted.mutable_data()) v += 17.5;
  const Tensor g = random_tensor({10}, rng), b = random_tensor({10}, rng);
  const Tensor y1 = layer_norm(x, g, b), y2 = layer_norm(shifted, g, b);
  for (std::size_t i = 0; i < y1.numel(); ++i) EXPECT_NEAR(y1[i], y2[i], 1e-6);
}

TEST(LayerNorm, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({3, 6}, rng, 1.0, true);
  Tensor g = random_tensor({6}, rng, 1.0, true);
  Tensor b = random_tensor({6}, rng, 1.0, true);
  const Tensor w = random_tensor({3, 6}, rng);
  GradTape tape;
  tape.backward(weighted_sum(layer_norm(x, g, b), w));
  auto loss = [&] { return weighted_sum(layer_norm(x, g, b), w).item(); };
  EXPECT_LT(check_gradient(x, x.grad(), loss).max_rel_error, 1e-4);
  EXPECT_LT(check_gradient(g, g.grad(), loss).max_rel_error, 1e-4);
  EXPECT_LT(check_gradient(b, b.grad(), loss).max_rel_error, 1e-4);
}

TEST(Gelu, Examples) {
  const Tensor y = gelu(Tensor::vector({0.0, 40.0, -40.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 40.0, 1e-12);
  EXPECT_NEAR(y[2], 0.0, 1e-12);
}

TEST(Gelu, MatchesIntegratedNormalCdf) {
  for (double x : {1.0, -0.7, 2.3}) {
    EXPECT_NEAR(gelu(Tensor::vector({x}))[0], x * phi_by_integration(x), 1e-10) << x;
  }
}

TEST(Gelu, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({4, 5}, rng, 2.0, true);
  const Tensor w = random_tensor({4, 5}, rng);
  GradTape tape;
  tape.backward(weighted_sum(gelu(x), w));
  EXPECT_LT(check_gradient(x, x.grad(), [&] { return weighted_sum(gelu(x), w).item(); }).max_rel_error, 1e-4);
}

TEST(Softmax, Examples) {
  const Tensor u = softmax_rows(Tensor::matrix({{0, 0, 0}}));
  for (double v : u.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  const Tensor s = softmax_rows(Tensor::matrix({{1000, 0}}));
  EXPECT_NEAR(s[0], 1.0, 1e-15);
  EXPECT_NEAR(s[1], 0.0, 1e-15);
}

TEST(Softmax, RowsAreDistributions) {
  std::mt19937_64 rng(6);
  const Tensor y = softmax_rows(random_tensor({50, 13}, rng, 5.0));
  for (std::size_t r = 0; r < 50; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 13; ++c) {
      EXPECT_GE(y.at(r, c), 0.0);
      EXPECT_LE(y.at(r, c), 1.0);
      s += y.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  Tensor x = random_tensor({3, 4}, rng, 1.0, true);
  const Tensor w = random_tensor({3, 4}, rng);
  GradTape tape;
  tape.backward(weighted_sum(softmax_rows(x), w));
  EXPECT_LT(check_gradient(x, x.grad(), [&] { return weighted_sum(softmax_rows(x), w).item(); }).max_rel_error,
            1e-4);
}

TEST(Cosine, Examples) {
  EXPECT_NEAR(cosine_sim(Tensor::vector({1, 2, 3}), Tensor::vector({1, 2, 3})).item(), 1.0, 1e-15);
  EXPECT_NEAR(cosine_sim(Tensor::vector({1, 0}), Tensor::vector({0, 1})).item(), 0.0, 1e-15);
  EXPECT_NEAR(cosine_sim(Tensor::vector({1, 2, 3}), Tensor::vector({4, 5, 6})).item(),
              32.0 / (std::sqrt(14.0) * std::sqrt(77.0)), 1e-12);
  EXPECT_NEAR(32.0 / (std::sqrt(14.0) * std::sqrt(77.0)), 0.97463, 1e-5);
}

TEST(Cosine, ZeroVectorIsFloored) {
  const double v = cosine_sim(Tensor::vector({0, 0, 0}), Tensor::vector({1, 2, 3})).item();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(v, 0.0);
}

TEST(Cosine, ScaleInvariant) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const Tensor a = random_tensor({9}, rng), b = random_tensor({9}, rng);
    const double base = cosine_sim(a, b).item();
    EXPECT_NEAR(cosine_sim(scale(a, 3.7), scale(b, 0.02)).item(), base, 1e-9);
  }
}

TEST(Cosine, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  Tensor a = random_tensor({6}, rng, 1.0, true), b = random_tensor({6}, rng, 1.0, true);
  GradTape tape;
  tape.backward(cosine_sim(a, b));
  auto loss = [&] { return cosine_sim(a, b).item(); };
  EXPECT_LT(check_gradient(a, a.grad(), loss).max_rel_error, 1e-4);
  EXPECT_LT(check_gradient(b, b.grad(), loss).max_rel_error, 1e-4);

  Tensor q = random_tensor({3, 5}, rng, 1.0, true), table = random_tensor({4, 5}, rng, 1.0, true);
  const Tensor w = random_tensor({3, 4}, rng);
  GradTape tape2;
  tape2.backward(weighted_sum(cosine_logits(q, table, 10.0), w));
  auto loss2 = [&] { return weighted_sum(cosine_logits(q, table, 10.0), w).item(); };
  EXPECT_LT(check_gradient(q, q.grad(), loss2).max_rel_error, 1e-4);
  EXPECT_LT(check_gradient(table, table.grad(), loss2).max_rel_error, 1e-4);
}

TEST(Embedding, GatherAndEmpty) {
  const Tensor table = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<std::int64_t> ids{2, 0};
  const Tensor y = embedding_lookup(table, ids);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{5, 6, 1, 2}));
  const Tensor e = embedding_lookup(table, std::vector<std::int64_t>{});
  EXPECT_EQ(e.shape(), (Shape{0, 2}));
}

TEST(Embedding, OutOfRangeNamesIdAndVocab) {
  const Tensor table(Shape{3, 2});
  try {
    embedding_lookup(table, std::vector<std::int64_t>{1, 7});
    FAIL();
  } catch (const IndexError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('7'), std::string::npos);
    EXPECT_NE(msg.find('3'), std::string::npos);
  }
}

TEST(Embedding, GradientCountsOccurrences) {
  Tensor table(Shape{4, 3}, true);
  const std::vector<std::int64_t> ids{1, 3, 1, 1, 0};
  GradTape tape;
  tape.backward(sum(embedding_lookup(table, ids)));
  const std::vector<double> counts{1, 3, 0, 1};
  const auto g = table.grad();
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(g[r * 3 + c], counts[r]);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  Tensor x = random_tensor({4, 6}, rng, 2.0, true);
  const std::vector<std::int64_t> t{0, 5, 2, 2};
  GradTape tape;
  tape.backward(cross_entropy(x, t));
  EXPECT_LT(check_gradient(x, x.grad(), [&] { return cross_entropy(x, t).item(); }).max_rel_error, 1e-4);
}

TEST(Attention, SegmentedGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  Tensor q = random_tensor({7, 4}, rng, 1.0, true);
  Tensor k = random_tensor({7, 4}, rng, 1.0, true);
  Tensor v = random_tensor({7, 4}, rng, 1.0, true);
  const Tensor w = random_tensor({7, 4}, rng);
  const std::vector<Segment> segs{{0, 3}, {3, 4}};
  auto f = [&] { return weighted_sum(multi_head_attention(q, k, v, segs, 2), w); };
  GradTape tape;
  tape.backward(f());
  for (Tensor* p : {&q, &k, &v}) {
    EXPECT_LT(check_gradient(*p, p->grad(), [&] { return f().item(); }).max_rel_error, 1e-4);
  }
}

TEST(Attention, SegmentsDoNotInteract) {
  std::mt19937_64 rng(12);
  const Tensor x = random_tensor({5, 4}, rng);
  const std::vector<Segment> segs{{0, 2}, {2, 3}};
  const Tensor full = multi_head_attention(x, x, x, segs, 2);
  Tensor x2 = x.clone();
  for (std::size_t i = 8; i < 20; ++i) x2.mutable_data()[i] += 1.0;
  const Tensor changed = multi_head_attention(x2, x2, x2, segs, 2);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(full[i], changed[i]);
}

TEST(Backward, SimpleLosses) {
  Tensor p = Tensor::vector({1.5, -2.0, 0.25}, true);
  {
    GradTape tape;
    tape.backward(sum(p));
    for (double g : p.grad()) EXPECT_EQ(g, 1.0);
  }
  p.zero_grad();
  {
    GradTape tape;
    tape.backward(sum(mul(p, p)));
    const auto g = p.grad();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g[i], 2.0 * p[i]);
  }
}

TEST(Backward, UnusedParameterHasExactlyZeroGradient) {
  Tensor used = Tensor::vector({1, 2}, true);
  Tensor unused = Tensor::vector({3, 4}, true);
  GradTape tape;
  tape.backward(sum(mul(used, used)));
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
  EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, ContractViolations) {
  Tensor p = Tensor::vector({1, 2}, true);
  {
    GradTape tape;
    const Tensor y = scale(p, 2.0);
    EXPECT_THROW(tape.backward(y), ContractError);
  }
  const Tensor outside = sum(p);
  GradTape tape;
  EXPECT_THROW(tape.backward(outside), ContractError);
}

TEST(Backward, VisitsOpsInReverseOrder) {
  std::vector<int> order;
  GradTape tape;
  Tensor p = Tensor::vector({1.0}, true);
  const Tensor loss = sum(p);
  tape.record([&] { order.push_back(1); });
  tape.record([&] { order.push_back(2); });
  tape.backward(loss);
  ASSERT_GE(order.size(), 2u);
  EXPECT_EQ(order[0], 2);
  EXPECT_EQ(order[1], 1);
}

TEST(Finiteness, NonFiniteOutputsThrow) {
  EXPECT_THROW(scale(Tensor::vector({1e308}), 10.0), NumericError);
  EXPECT_THROW(add(Tensor::vector({std::nan("")}), Tensor::vector({1.0})), NumericError);
}

}  // namespace
}  // namespace token2vec
