#include <gtest/gtest.h>

#include <cmath>

#include "starvqa/errors.hpp"
#include "starvqa/kernels.hpp"
#include "test_util.hpp"

using namespace starvqa;
namespace k = starvqa::kernels;

TEST(Matmul, IdentityLeavesMatrix) {
  const std::vector<double> a{1, 0, 0, 1}, b{3, 4, 5, 6};
  std::vector<double> c(4);
  k::matmul<double>(a, b, c, 2, 2, 2);
  EXPECT_EQ(c, b);
}

TEST(Matmul, ZerosAnnihilate) {
  const std::vector<double> a(6, 0.0), b{1, 2, 3, 4, 5, 6};
  std::vector<double> c(4, 7.0);
  k::matmul<double>(a, b, c, 2, 3, 2);
  EXPECT_EQ(c, std::vector<double>(4, 0.0));
}

TEST(Matmul, HandExpansion) {
  const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  std::vector<double> c(4);
  k::matmul<double>(a, b, c, 2, 2, 2);
  EXPECT_EQ(c, (std::vector<double>{19, 22, 43, 50}));
}

TEST(Matmul, BufferMismatchIsShapeError) {
  const std::vector<double> a(5), b(4);
  std::vector<double> c(4);
  EXPECT_THROW(k::matmul<double>(a, b, c, 2, 2, 2), ShapeError);
}

TEST(Matmul, AgreesWithSerialReference) {
  std::mt19937_64 rng(1);
  for (auto [m, kk, n] : {std::array<std::size_t, 3>{1, 1, 1}, {5, 7, 3}, {17, 33, 9}, {64, 48, 70}}) {
    const auto a = svqa_test::random_tensor<double>({m, kk}, rng);
    const auto b = svqa_test::random_tensor<double>({kk, n}, rng);
    const auto bt = svqa_test::random_tensor<double>({n, kk}, rng);
    const auto at = svqa_test::random_tensor<double>({kk, m}, rng);
    std::vector<double> fast(m * n), ref(m * n);
    k::matmul<double>(a.values(), b.values(), fast, m, kk, n);
    k::reference::matmul<double>(a.values(), b.values(), ref, m, kk, n);
    for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], ref[i], 1e-12);
    k::matmul_nt<double>(a.values(), bt.values(), fast, m, kk, n);
    k::reference::matmul_nt<double>(a.values(), bt.values(), ref, m, kk, n);
    for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], ref[i], 1e-12);
    k::matmul_tn<double>(at.values(), b.values(), fast, m, kk, n);
    k::reference::matmul_tn<double>(at.values(), b.values(), ref, m, kk, n);
    for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], ref[i], 1e-12);
  }
}

TEST(Matmul, AccumulateAdds) {
  const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  std::vector<double> c{1, 1, 1, 1};
  k::matmul<double>(a, b, c, 2, 2, 2, true);
  EXPECT_EQ(c, (std::vector<double>{20, 23, 44, 51}));
}

TEST(Matmul, ThreadCountDoesNotChangeBits) {
  std::mt19937_64 rng(2);
  const auto a = svqa_test::random_tensor<float>({37, 29}, rng);
  const auto b = svqa_test::random_tensor<float>({29, 41}, rng);
  std::vector<float> one(37 * 41), many(37 * 41);
  k::set_thread_limit(1);
  k::matmul<float>(a.values(), b.values(), one, 37, 29, 41);
  k::set_thread_limit(4);
  k::matmul<float>(a.values(), b.values(), many, 37, 29, 41);
  k::set_thread_limit(0);
  EXPECT_EQ(one, many);
}

TEST(Transpose, SwapsIndices) {
  std::mt19937_64 rng(3);
  const auto a = svqa_test::random_tensor<double>({13, 70}, rng);
  std::vector<double> t(13 * 70);
  k::transpose<double>(a.values(), t, 13, 70);
  for (std::size_t r = 0; r < 13; ++r)
    for (std::size_t c = 0; c < 70; ++c) EXPECT_EQ(t[c * 13 + r], a.at(r, c));
}

TEST(Softmax, ConstantRowIsUniform) {
  for (double c : {-50.0, 0.0, 3.0, 700.0}) {
    const std::vector<double> x(4, c);
    std::vector<double> y(4);
    k::softmax_rows<double>(x, y, 1, 4);
    for (double v : y) EXPECT_DOUBLE_EQ(v, 0.25);
  }
}

TEST(Softmax, LogTwo) {
  const std::vector<double> x{0.0, std::log(2.0)};
  std::vector<double> y(2);
  k::softmax_rows<double>(x, y, 1, 2);
  EXPECT_NEAR(y[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(y[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, EmptyIsShapeError) {
  std::vector<double> x, y;
  EXPECT_THROW(k::softmax_rows<double>(x, y, 1, 0), ShapeError);
}

TEST(Softmax, PropertySumsToOneAndShiftInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  std::uniform_real_distribution<double> shift(-100, 100);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = len(rng);
    const auto x = svqa_test::random_tensor<float>({n}, rng, -20, 20);
    auto shifted = x;
    const float c = static_cast<float>(shift(rng));
    for (auto& v : shifted.values()) v += c;
    std::vector<float> y(n), ys(n);
    k::softmax_rows<float>(x.values(), y, 1, n);
    k::softmax_rows<float>(shifted.values(), ys, 1, n);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GE(y[i], 0.0f);
      sum += y[i];
      EXPECT_NEAR(y[i], ys[i], 1e-5);
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  const std::vector<float> x{1e30f, -1e30f, 88.0f, 1e30f};
  std::vector<float> y(4);
  k::softmax_rows<float>(x, y, 1, 4);
  for (float v : y) EXPECT_TRUE(std::isfinite(v));
  EXPECT_FLOAT_EQ(y[0], 0.5f);
}

TEST(Softmax, AgreesWithReference) {
  std::mt19937_64 rng(5);
  const auto x = svqa_test::random_tensor<double>({9, 13}, rng, -5, 5);
  std::vector<double> fast(x.size()), ref(x.size());
  k::softmax_rows<double>(x.values(), fast, 9, 13);
  k::reference::softmax_rows<double>(x.values(), ref, 9, 13);
  for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], ref[i], 1e-15);
}

namespace {

std::vector<double> layernorm(const std::vector<double>& x, double eps) {
  std::vector<double> g(x.size(), 1.0), b(x.size(), 0.0), y(x.size()), rstd(1);
  k::layernorm_rows<double>(x, g, b, y, rstd, 1, x.size(), eps);
  return y;
}

}  // namespace

TEST(LayerNorm, ConstantVectorGivesZeros) {
  for (double v : layernorm({4, 4, 4, 4, 4}, 1e-6)) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, StandardizedVectorUnchanged) {
  const auto y = layernorm({-1, 1}, 1e-6);
  EXPECT_NEAR(y[0], -1.0, 1e-6);
  EXPECT_NEAR(y[1], 1.0, 1e-6);
}

TEST(LayerNorm, OneTwoThree) {
  const auto y = layernorm({1, 2, 3}, 0.0);
  EXPECT_NEAR(y[0], -1.224744871391589, 1e-14);
  EXPECT_NEAR(y[1], 0.0, 1e-15);
  EXPECT_NEAR(y[2], 1.224744871391589, 1e-14);
}

TEST(LayerNorm, GainAndBias) {
  const std::vector<double> x{1, 2, 3}, g{2, 2, 2}, b{1, 1, 1};
  std::vector<double> y(3), rstd(1);
  k::layernorm_rows<double>(x, g, b, y, rstd, 1, 3, 0.0);
  EXPECT_NEAR(y[2], 1.0 + 2 * 1.224744871391589, 1e-14);
  EXPECT_NEAR(rstd[0], 1.0 / std::sqrt(2.0 / 3.0), 1e-14);
}

TEST(LayerNorm, PropertyMeanZeroUnitVariance) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> len(2, 64);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = len(rng);
    const auto x = svqa_test::random_tensor<double>({n}, rng, -30, 30);
    const auto y = layernorm(x.storage(), 0.0);
    double mean = 0, var = 0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(LayerNorm, AgreesWithReference) {
  std::mt19937_64 rng(7);
  const auto x = svqa_test::random_tensor<float>({11, 24}, rng, -3, 3);
  const auto g = svqa_test::random_tensor<float>({24}, rng);
  const auto b = svqa_test::random_tensor<float>({24}, rng);
  std::vector<float> fast(x.size()), ref(x.size()), r1(11), r2(11);
  k::layernorm_rows<float>(x.values(), g.values(), b.values(), fast, r1, 11, 24, 1e-6f);
  k::reference::layernorm_rows<float>(x.values(), g.values(), b.values(), ref, r2, 11, 24, 1e-6f);
  for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], ref[i], 1e-5);
}

TEST(Gelu, KnownValues) {
  const std::vector<double> x{0.0, 1.0, 10.0, -10.0};
  std::vector<double> y(4);
  k::gelu<double>(x, y);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 0.84134474606854295, 1e-15);
  EXPECT_NEAR(y[2], 10.0, 1e-6);
  EXPECT_NEAR(y[3], 0.0, 1e-6);
}

TEST(Gelu, DerivativeMatchesDifferences) {
  for (double x = -4; x <= 4; x += 0.37) {
    const double h = 1e-5;
    std::vector<double> in{x + h, x - h}, out(2);
    k::gelu<double>(in, out);
    EXPECT_NEAR(k::gelu_derivative(x), (out[0] - out[1]) / (2 * h), 1e-8);
  }
}
