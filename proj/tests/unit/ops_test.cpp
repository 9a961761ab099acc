#include <gtest/gtest.h>

#include <cmath>

#include "nest/ops.hpp"
#include "support/gradcheck.hpp"

namespace nest {
namespace {

using testing::kTol32;
using testing::kTol64;

std::vector<float> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Builds random (or tie-free) leaves of the given shapes, applies `build`
// and gradchecks probe(build(inputs)) at precision T.
template <typename T, typename Build>
double grad_error(Build build, const std::vector<Shape>& shapes, bool spaced = false, std::uint64_t seed = 11) {
  Rng rng(seed);
  std::vector<BasicTensor<T>> in;
  for (const auto& s : shapes) {
    in.push_back(spaced ? testing::spaced_tensor<T>(s, rng, true) : testing::random_tensor<T>(s, rng, true));
  }
  const double eps = std::is_same_v<T, float> ? testing::kEps32 : testing::kEps64;
  return testing::gradcheck<T>([&] { return testing::probe(build(in)); }, in, eps).max_rel_error;
}

#define EXPECT_GRADS(build, ...)                                  \
  do {                                                            \
    EXPECT_LT(grad_error<float>(build, __VA_ARGS__), kTol32);     \
    EXPECT_LT(grad_error<double>(build, __VA_ARGS__), kTol64);    \
  } while (0)

// ---- matmul ----

TEST(Matmul, IdentityLeavesMatrix) {
  const auto a = Tensor::from_vector({2, 2}, {1, 2, 3, 4});
  const auto eye = Tensor::from_vector({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(vals(matmul(a, eye)), (std::vector<float>{1, 2, 3, 4}));
  EXPECT_EQ(vals(matmul(eye, a)), (std::vector<float>{1, 2, 3, 4}));
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4, 5)"), std::string::npos) << msg;
  }
}

TEST(Matmul, SumGradientIsOnesTimesBTransposed) {
  Rng rng(1);
  auto a = testing::random_tensor<double>({3, 4}, rng, true);
  const auto b = testing::random_tensor<double>({4, 5}, rng);
  sum(matmul(a, b)).backward();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k) {
      double row_sum = 0;
      for (int j = 0; j < 5; ++j) row_sum += b.at({k, j});
      EXPECT_NEAR(a.grad()[i * 4 + k], row_sum, 1e-12);
    }
  EXPECT_GRADS([](const auto& in) { return matmul(in[0], in[1]); }, {{3, 4}, {4, 5}});
}

TEST(Matmul, BatchedAndTransposedGradients) {
  EXPECT_GRADS([](const auto& in) { return matmul(in[0], in[1]); }, {{2, 3, 4}, {2, 4, 2}});
  EXPECT_GRADS([](const auto& in) { return matmul(in[0], in[1], true); }, {{2, 3, 4}, {2, 5, 4}});
  EXPECT_GRADS([](const auto& in) { return matmul(in[0], in[1]); }, {{2, 3, 4}, {4, 2}});
}

TEST(Matmul, BatchedMatchesPerSliceProducts) {
  Rng rng(2);
  const auto a = testing::random_tensor<double>({2, 2, 3}, rng);
  const auto b = testing::random_tensor<double>({2, 3, 2}, rng);
  const auto c = matmul(a, b);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double acc = 0;
        for (int k = 0; k < 3; ++k) acc += a.at({n, i, k}) * b.at({n, k, j});
        EXPECT_NEAR(c.at({n, i, j}), acc, 1e-12);
      }
}

// ---- softmax ----

TEST(Softmax, UniformInputGivesUniformOutput) {
  const auto y = softmax(Tensor::zeros({3}), 0);
  for (float v : y.values()) EXPECT_FLOAT_EQ(v, 1.0f / 3.0f);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  const auto y = softmax(Tensor::from_vector({3}, {1000, 0, 0}), 0);
  EXPECT_FLOAT_EQ(y.values()[0], 1.0f);
  EXPECT_FLOAT_EQ(y.values()[1], 0.0f);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(4);
  const auto y = softmax(testing::random_tensor<float>({3, 4, 5}, rng, false, 3.0), 1);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 5; ++k) {
      double s = 0;
      for (int j = 0; j < 4; ++j) s += y.at({i, j, k});
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Softmax, JacobianMatchesFiniteDifferences) {
  EXPECT_LT(grad_error<float>([](const auto& in) { return softmax(in[0], 0); }, {{5}}), 1e-3);
  EXPECT_LT(grad_error<double>([](const auto& in) { return softmax(in[0], 0); }, {{5}}), 1e-6);
  EXPECT_GRADS([](const auto& in) { return softmax(in[0], 1); }, {{2, 4, 3}});
}

// ---- layernorm ----

TEST(LayerNorm, ConstantVectorMapsToZeros) {
  const auto y = layernorm(Tensor::full({4}, 3.0f), Tensor::ones({4}), Tensor::zeros({4}));
  for (float v : y.values()) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(LayerNorm, TwoPointStandardization) {
  const auto y = layernorm(Tensor64::from_vector({2}, {1, 3}), Tensor64::ones({2}), Tensor64::zeros({2}), 1e-12);
  EXPECT_NEAR(y.values()[0], -1.0, 1e-9);
  EXPECT_NEAR(y.values()[1], 1.0, 1e-9);
}

TEST(LayerNorm, SlicesHaveZeroMeanUnitVariance) {
  Rng rng(5);
  const auto x = testing::random_tensor<float>({2, 4, 8}, rng, false, 2.0);
  const auto y = layernorm(x, Tensor::ones({8}), Tensor::zeros({8}));
  for (int i = 0; i < 8; ++i) {
    double m = 0, v = 0;
    for (int k = 0; k < 8; ++k) m += y.values()[i * 8 + k];
    m /= 8;
    for (int k = 0; k < 8; ++k) v += std::pow(y.values()[i * 8 + k] - m, 2);
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_NEAR(v / 8, 1.0, 1e-4);
  }
}

TEST(LayerNorm, GradientsReachInputScaleAndBias) {
  EXPECT_GRADS([](const auto& in) { return layernorm(in[0], in[1], in[2]); }, {{2, 3, 6}, {6}, {6}});
}

// ---- conv2d ----

TEST(Conv2d, DeltaKernelIsIdentity) {
  Rng rng(6);
  const auto x = testing::random_tensor<float>({1, 5, 4, 2}, rng);
  std::vector<float> k(3 * 3 * 2 * 2, 0.0f);
  for (int c = 0; c < 2; ++c) k[((1 * 3 + 1) * 2 + c) * 2 + c] = 1.0f;
  const auto y = conv2d(x, Tensor::from_vector({3, 3, 2, 2}, k), Tensor());
  EXPECT_EQ(vals(y), vals(x));
}

TEST(Conv2d, OnesKernelSumsNeighbourhood) {
  const auto y = conv2d(Tensor::ones({1, 5, 5, 1}), Tensor::ones({3, 3, 1, 1}), Tensor());
  EXPECT_FLOAT_EQ(y.at({0, 2, 2, 0}), 9.0f);
  EXPECT_FLOAT_EQ(y.at({0, 0, 0, 0}), 4.0f);  // zero padding at the corner
  EXPECT_FLOAT_EQ(y.at({0, 0, 2, 0}), 6.0f);
}

TEST(Conv2d, StrideTwoHalvesAndChecksChannels) {
  const auto y = conv2d(Tensor::ones({2, 8, 6, 3}), Tensor::ones({3, 3, 3, 4}), Tensor::zeros({4}), 2);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 3, 4}));
  EXPECT_THROW(conv2d(Tensor::ones({1, 4, 4, 2}), Tensor::ones({3, 3, 3, 1}), Tensor()), DimensionError);
  EXPECT_THROW(conv2d(Tensor::ones({1, 4, 4, 1}), Tensor::ones({3, 3, 1, 1}), Tensor(), 3), DimensionError);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  EXPECT_GRADS([](const auto& in) { return conv2d(in[0], in[1], in[2]); }, {{1, 5, 5, 2}, {3, 3, 2, 3}, {3}});
  EXPECT_GRADS([](const auto& in) { return conv2d(in[0], in[1], in[2], 2); }, {{2, 4, 6, 2}, {3, 3, 2, 2}, {2}});
  EXPECT_GRADS([](const auto& in) { return conv2d(in[0], in[1], in[2]); }, {{1, 3, 3, 4}, {1, 1, 4, 2}, {2}});
}

// ---- pooling ----

TEST(MaxPool, ConstantMapHalves) {
  const auto y = maxpool2d(Tensor::full({1, 6, 4, 2}, 1.5f));
  EXPECT_EQ(y.shape(), (Shape{1, 3, 2, 2}));
  for (float v : y.values()) EXPECT_FLOAT_EQ(v, 1.5f);
}

TEST(MaxPool, SinglePeakSurvivesInItsCell) {
  std::vector<float> x(16, 0.0f);
  x[2 * 4 + 3] = 5.0f;  // row 2, col 3
  const auto y = maxpool2d(Tensor::from_vector({1, 4, 4, 1}, x));
  EXPECT_FLOAT_EQ(y.at({0, 1, 1, 0}), 5.0f);
  EXPECT_FLOAT_EQ(y.at({0, 0, 0, 0}), 0.0f);
}

TEST(MaxPool, OddExtentIsDimensionError) {
  EXPECT_THROW(maxpool2d(Tensor::ones({1, 5, 4, 1})), DimensionError);
}

TEST(MaxPool, TieRoutesGradientToLowestIndex) {
  auto x = Tensor::ones({1, 2, 2, 1}, true);
  sum(maxpool2d(x, 2, 2)).backward();
  EXPECT_EQ(vals(x.grad_tensor()), (std::vector<float>{1, 0, 0, 0}));
}

TEST(MaxPool, SubgradientAwayFromTies) {
  EXPECT_GRADS([](const auto& in) { return maxpool2d(in[0]); }, {{1, 8, 8, 2}}, true);
}

TEST(AvgPool, ConstantMapStaysConstant) {
  const auto y = avgpool2d(Tensor::full({1, 4, 4, 3}, 2.0f), 3, 2);
  for (float v : y.values()) EXPECT_FLOAT_EQ(v, 2.0f);
}

TEST(AvgPool, TwoByTwoWindowAverages) {
  const auto y = avgpool2d(Tensor::from_vector({1, 2, 2, 1}, {1, 2, 3, 4}), 2, 2);
  EXPECT_FLOAT_EQ(y.item(), 2.5f);
}

TEST(AvgPool, EqualsUniformConvolutionWhereNoPadding) {
  Rng rng(8);
  const auto x = testing::random_tensor<double>({1, 6, 6, 1}, rng);
  const auto pooled = avgpool2d(x, 2, 2);
  const auto conv = conv2d(x, Tensor64::full({2, 2, 1, 1}, 0.25), Tensor64(), 2);
  ASSERT_EQ(pooled.shape(), conv.shape());
  for (std::size_t i = 0; i < pooled.values().size(); ++i) EXPECT_NEAR(pooled.values()[i], conv.values()[i], 1e-12);
}

TEST(AvgPool, GradientsMatchFiniteDifferences) {
  EXPECT_GRADS([](const auto& in) { return avgpool2d(in[0], 3, 2); }, {{1, 6, 4, 2}});
}

// ---- rearrangements ----

TEST(PixelShuffle, ChannelOrderIsRaster) {
  const auto y = pixel_shuffle(Tensor::from_vector({1, 1, 1, 4}, {1, 2, 3, 4}));
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2, 1}));
  EXPECT_EQ(vals(y), (std::vector<float>{1, 2, 3, 4}));
}

TEST(PixelShuffle, InvertsSpaceToDepth) {
  Rng rng(9);
  const auto x = testing::random_tensor<float>({2, 3, 5, 8}, rng);
  const auto up = pixel_shuffle(x);
  EXPECT_EQ(up.shape(), (Shape{2, 6, 10, 2}));
  EXPECT_EQ(up.numel(), x.numel());
  EXPECT_EQ(vals(space_to_depth(up, 2)), vals(x));
  EXPECT_THROW(pixel_shuffle(Tensor::ones({1, 2, 2, 6})), DimensionError);
}

TEST(Rearrange, GradientsMatchFiniteDifferences) {
  EXPECT_GRADS([](const auto& in) { return pixel_shuffle(in[0]); }, {{1, 2, 3, 8}});
  EXPECT_GRADS([](const auto& in) { return space_to_depth(in[0], 2); }, {{1, 4, 2, 3}});
  EXPECT_GRADS([](const auto& in) { return upsample_nearest(in[0], 2); }, {{1, 2, 3, 2}});
  EXPECT_GRADS([](const auto& in) { return subsample(in[0], 2); }, {{1, 4, 4, 2}});
  EXPECT_GRADS([](const auto& in) { return permute(in[0], {2, 0, 1}); }, {{2, 3, 4}});
  EXPECT_GRADS([](const auto& in) { return slice(in[0], 1, 1, 2); }, {{2, 4, 3}});
  EXPECT_GRADS([](const auto& in) { return reshape(in[0], {3, -1}); }, {{2, 3, 2}});
}

// ---- elementwise, reductions, losses ----

TEST(Elementwise, ReluAndMean) {
  const auto r = relu(Tensor::from_vector({2}, {-1, 2}));
  EXPECT_EQ(vals(r), (std::vector<float>{0, 2}));
  EXPECT_FLOAT_EQ(mean(Tensor::ones({3, 4})).item(), 1.0f);
  EXPECT_THROW(add(Tensor::ones({2, 3}), Tensor::ones({2})), DimensionError);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  EXPECT_GRADS([](const auto& in) { return add(in[0], in[1]); }, {{2, 3}, {3}});
  EXPECT_GRADS([](const auto& in) { return sub(in[0], in[1]); }, {{2, 3}, {2, 3}});
  EXPECT_GRADS([](const auto& in) { return mul(in[0], in[1]); }, {{2, 3}, {3}});
  EXPECT_GRADS([](const auto& in) { return relu(in[0]); }, {{3, 4}}, true);
  EXPECT_GRADS([](const auto& in) { return tanh(in[0]); }, {{3, 4}});
  EXPECT_GRADS([](const auto& in) { return sum_axis(in[0], 1); }, {{2, 3, 2}});
  EXPECT_GRADS([](const auto& in) { return mean_axis(in[0], 0); }, {{2, 3, 2}});
  using T32 = float;
  EXPECT_LT(grad_error<T32>(
                [](const auto& in) {
                  const std::vector<T32> f{0.0f, 1.0f, 0.5f};
                  return scale_samples(in[0], std::span<const T32>(f));
                },
                {{3, 2, 2}}),
            kTol32);
}

TEST(Linear, WithAndWithoutBias) {
  const auto y = linear(Tensor::from_vector({1, 2}, {1, 2}), Tensor::from_vector({2, 3}, {1, 0, 1, 0, 1, 1}),
                        Tensor::from_vector({3}, {0.5f, 0, 0}));
  EXPECT_EQ(vals(y), (std::vector<float>{1.5f, 2, 3}));
  EXPECT_GRADS([](const auto& in) { return linear(in[0], in[1], in[2]); }, {{2, 3, 4}, {4, 5}, {5}});
  using T = double;
  EXPECT_LT(grad_error<T>([](const auto& in) { return linear(in[0], in[1], BasicTensor<T>()); }, {{3, 4}, {4, 2}}),
            kTol64);
}

TEST(Composite, MlpGradient) {
  EXPECT_GRADS(
      [](const auto& in) {
        const auto h = relu(linear(in[0], in[1], in[2]));
        return linear(h, in[3], in[4]);
      },
      {{4, 3}, {3, 6}, {6}, {6, 2}, {2}});
}

TEST(Losses, CrossEntropyAndMse) {
  const std::vector<int> labels{0, 2};
  const auto logits = Tensor64::from_vector({2, 3}, {0, 0, 0, 1, 2, 3});
  const double expected = (std::log(3.0) + (std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0)) / 2;
  EXPECT_NEAR(cross_entropy(logits, labels).item(), expected, 1e-12);
  // Smoothing s puts 1 - s + s/C on the label and s/C elsewhere.
  const auto uniform = Tensor64::zeros({1, 4});
  EXPECT_NEAR(cross_entropy(uniform, std::vector<int>{1}, 0.1).item(), std::log(4.0), 1e-12);
  EXPECT_THROW(cross_entropy(logits, std::vector<int>{0, 3}), RangeError);
  EXPECT_NEAR(mse(Tensor64::from_vector({2}, {1, 3}), Tensor64::from_vector({2}, {0, 0})).item(), 5.0, 1e-12);

  EXPECT_GRADS([&](const auto& in) { return cross_entropy(in[0], labels, static_cast<decltype(in[0].item())>(0.1)); },
               {{2, 3}});
  EXPECT_GRADS([](const auto& in) { return mse(in[0], in[1]); }, {{2, 3}, {2, 3}});
}

}  // namespace
}  // namespace nest
