#include <gtest/gtest.h>

#include "nest/aggregation.hpp"
#include "nest/ops.hpp"
#include "support/gradcheck.hpp"

namespace nest {

// Readable parameter names in test listings.
void PrintTo(AggregationKind kind, std::ostream* os) { *os << to_string(kind); }
void PrintTo(Plane plane, std::ostream* os) { *os << to_string(plane); }

namespace {

const AggregationKind kImplemented[] = {AggregationKind::kConvLnMaxpool, AggregationKind::kConvLnAvgpool,
                                        AggregationKind::kConvStride2,   AggregationKind::kMaxpoolOnly,
                                        AggregationKind::kPatchMerge,    AggregationKind::kSubsample2x2};

ParamSet aggregation_params(AggregationKind kind, int d, int d_out, std::uint64_t seed = 5) {
  std::vector<ParamSpec> specs;
  append_aggregation_specs(specs, "agg", kind, d, d_out);
  Rng rng(seed);
  return init_params(specs, rng, 0.5);
}

TEST(Blockify, RasterOrderOfBlocksAndPositions) {
  // 4x4 plane of values 0..15, blocks of side 2.
  std::vector<float> v(16);
  for (int i = 0; i < 16; ++i) v[i] = static_cast<float>(i);
  const auto blocks = blockify(Tensor::from_vector({1, 4, 4, 1}, v), 2);
  EXPECT_EQ(blocks.shape(), (Shape{1, 4, 4, 1}));
  const std::vector<float> expected{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15};
  EXPECT_EQ(std::vector<float>(blocks.values().begin(), blocks.values().end()), expected);
  const auto back = unblockify(blocks);
  EXPECT_EQ(std::vector<float>(back.values().begin(), back.values().end()), v);
}

TEST(Blockify, RejectsIndivisiblePlanesAndNonSquareCounts) {
  EXPECT_THROW(blockify(Tensor::zeros({1, 6, 6, 1}), 4), DimensionError);
  EXPECT_THROW(unblockify(Tensor::zeros({1, 8, 4, 1})), DimensionError);
  EXPECT_THROW(unblockify(Tensor::zeros({1, 4, 5, 1})), DimensionError);
}

class AggregationVariant : public ::testing::TestWithParam<std::tuple<AggregationKind, Plane>> {};

TEST_P(AggregationVariant, QuartersBlockCountAndKeepsSequenceLength) {
  const auto [kind, plane] = GetParam();
  const AggregationSpec spec{kind, plane};
  const auto params = aggregation_params(kind, 4, 8);
  Rng rng(2);
  const auto x16 = testing::random_tensor<float>({2, 16, 4, 4}, rng);
  const auto y4 = aggregate(x16, spec, params, "agg");
  EXPECT_EQ(y4.shape(), (Shape{2, 4, 4, 8}));
  const auto y1 = aggregate(testing::random_tensor<float>({2, 4, 4, 4}, rng), spec, params, "agg");
  EXPECT_EQ(y1.shape(), (Shape{2, 1, 4, 8}));
  EXPECT_THROW(aggregate(y1, spec, params, "agg"), HierarchyError);
}

TEST(Aggregation, BlockPlaneNeverMixesMergeGroups) {
  for (auto kind : kImplemented) {
    SCOPED_TRACE(to_string(kind));
    const auto params = aggregation_params(kind, 2, 2);
    Rng rng(4);
    // 16 blocks of side 2 form an 8x8 plane; merge group 0 covers its top-left 4x4.
    auto plane_in = testing::random_tensor<float>({1, 8, 8, 2}, rng, true);
    const auto out = aggregate_from_plane(plane_in, {kind, Plane::kBlock}, params, "agg", 2);
    testing::probe(slice(out, 1, 0, 1)).backward();
    const auto g = plane_in.grad();
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        if (y < 4 && x < 4) continue;
        for (int c = 0; c < 2; ++c) EXPECT_EQ(g[(y * 8 + x) * 2 + c], 0.0f) << y << "," << x;
      }
  }
}

TEST_P(AggregationVariant, GradientsMatchFiniteDifferences) {
  const auto [kind, plane] = GetParam();
  const AggregationSpec spec{kind, plane};
  const auto params64 = aggregation_params(kind, 4, 4).cast<double>();
  Rng rng(6);
  const auto x64 = testing::spaced_tensor<double>({1, 4, 4, 4}, rng, true, 0.05);
  auto inputs = testing::leaves(params64);
  inputs.push_back(x64);
  for (auto& t : inputs) t.set_requires_grad(true);
  const auto report = testing::gradcheck<double>(
      [&] { return testing::probe(aggregate(x64, spec, params64, "agg")); }, inputs, testing::kEps64);
  EXPECT_LT(report.max_rel_error, testing::kTol64) << report.worst;
}

INSTANTIATE_TEST_SUITE_P(All, AggregationVariant,
                         ::testing::Combine(::testing::ValuesIn(kImplemented),
                                            ::testing::Values(Plane::kImage, Plane::kBlock)),
                         [](const auto& info) {
                           return std::string(to_string(std::get<0>(info.param))) + "_" +
                                  std::string(to_string(std::get<1>(info.param)));
                         });

// In image-plane mode the spatial kernels straddle merge-group borders.
TEST(Aggregation, ImagePlaneReachesAcrossGroupBorders) {
  for (auto kind : {AggregationKind::kConvLnAvgpool, AggregationKind::kConvStride2}) {
    SCOPED_TRACE(to_string(kind));
    const auto params = aggregation_params(kind, 2, 2);
    Rng rng(4);
    auto plane_in = testing::random_tensor<float>({1, 8, 8, 2}, rng, true);
    const auto out = aggregate_from_plane(plane_in, {kind, Plane::kImage}, params, "agg", 2);
    testing::probe(slice(out, 1, 0, 1)).backward();
    const auto g = plane_in.grad();
    double outside = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        if (y >= 4 || x >= 4)
          for (int c = 0; c < 2; ++c) outside += std::abs(g[(y * 8 + x) * 2 + c]);
    EXPECT_GT(outside, 0.0);
  }
}

TEST(Aggregation, ReservedVariantIsNotImplemented) {
  std::vector<ParamSpec> specs;
  EXPECT_THROW(append_aggregation_specs(specs, "agg", AggregationKind::kConv4x1, 4, 4), NotImplementedError);
  EXPECT_THROW(aggregate_plane(Tensor::zeros({1, 4, 4, 4}), AggregationKind::kConv4x1, ParamSet{}, "agg"),
               NotImplementedError);
}

TEST(Aggregation, ParameterCounts) {
  auto count = [](AggregationKind kind, int d, int d_out) {
    std::vector<ParamSpec> specs;
    append_aggregation_specs(specs, "agg", kind, d, d_out);
    return count_params(specs);
  };
  EXPECT_EQ(count(AggregationKind::kConvLnMaxpool, 4, 8), 9 * 4 * 8 + 8 + 2 * 8);
  EXPECT_EQ(count(AggregationKind::kConvStride2, 4, 8), 9 * 4 * 8 + 8);
  EXPECT_EQ(count(AggregationKind::kPatchMerge, 4, 8), 16 * 8 + 8);
  EXPECT_EQ(count(AggregationKind::kMaxpoolOnly, 4, 4), 0);
  EXPECT_EQ(count(AggregationKind::kSubsample2x2, 4, 8), 4 * 8 + 8);
}

TEST(PatchMerge, ConstantInputWithUnitKernel) {
  const auto out = patch_merge(Tensor::ones({1, 4, 4, 3}), Tensor::ones({12, 2}), Tensor::full({2}, 0.5f));
  EXPECT_EQ(out.shape(), (Shape{1, 2, 2, 2}));
  for (float v : out.values()) EXPECT_FLOAT_EQ(v, 12.5f);
}

TEST(PatchMerge, MatchesExplicitConcatenationOracle) {
  Rng rng(8);
  const auto x = testing::random_tensor<double>({2, 4, 6, 3}, rng);
  const auto k = testing::random_tensor<double>({12, 5}, rng);
  const auto b = testing::random_tensor<double>({5}, rng);
  const auto out = patch_merge(x, k, b);
  ASSERT_EQ(out.shape(), (Shape{2, 2, 3, 5}));
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j)
        for (int o = 0; o < 5; ++o) {
          double acc = b.at({o});
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              for (int c = 0; c < 3; ++c) acc += x.at({n, 2 * i + dy, 2 * j + dx, c}) * k.at({(dy * 2 + dx) * 3 + c, o});
          EXPECT_NEAR(out.at({n, i, j, o}), acc, 1e-12);
        }
}

TEST(Subsample, KeepsTopLeftOfEveryCellAndRoutesGradientThere) {
  std::vector<float> v(16);
  for (int i = 0; i < 16; ++i) v[i] = static_cast<float>(i);
  auto x = Tensor::from_vector({1, 4, 4, 1}, v, true);
  const auto y = subsample_2x2(x);
  EXPECT_EQ(std::vector<float>(y.values().begin(), y.values().end()), (std::vector<float>{0, 2, 8, 10}));
  sum(y).backward();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(x.grad()[r * 4 + c], (r % 2 == 0 && c % 2 == 0) ? 1.0f : 0.0f);
}

TEST(DeAggregate, QuadruplesBlocksAndQuartersWidth) {
  Rng rng(9);
  const auto x = testing::random_tensor<float>({2, 1, 4, 8}, rng);
  for (auto kind : {DeaggregationKind::kPixelShuffle, DeaggregationKind::kConvPixelShuffle,
                    DeaggregationKind::kNearestConv}) {
    SCOPED_TRACE(to_string(kind));
    std::vector<ParamSpec> specs;
    append_deaggregation_specs(specs, "up", kind, 8);
    Rng init(1);
    const auto params = init_params(specs, init);
    const auto y = de_aggregate(x, kind, params, "up");
    EXPECT_EQ(y.shape(), (Shape{2, 4, 4, 2}));
  }
  EXPECT_THROW(de_aggregate(Tensor::zeros({1, 1, 4, 6}), DeaggregationKind::kPixelShuffle, ParamSet{}, "up"),
               DimensionError);
}

TEST(DeAggregate, PixelShuffleIsTheInverseOfSpaceToDepthPerPlane) {
  Rng rng(10);
  const auto plane = testing::random_tensor<float>({1, 4, 4, 2}, rng);
  // space_to_depth + blockify at side 2 gives one block of the coarse level.
  const auto coarse = blockify(space_to_depth(plane, 2), 2);
  const auto back = unblockify(de_aggregate(coarse, DeaggregationKind::kPixelShuffle, ParamSet{}, "up"));
  for (std::int64_t i = 0; i < plane.numel(); ++i) EXPECT_EQ(back.values()[i], plane.values()[i]);
}

}  // namespace
}  // namespace nest
