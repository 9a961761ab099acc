#include "nest/aggregation.hpp"

#include <cmath>

#include "nest/ops.hpp"

namespace nest {

namespace {

int exact_sqrt(std::int64_t v, std::string_view what) {
  const auto r = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(v))));
  if (r * r != v) throw DimensionError(std::string(what) + " " + std::to_string(v) + " is not a perfect square");
  return static_cast<int>(r);
}

void add_conv(std::vector<ParamSpec>& specs, const std::string& name, int k, int d, int d_out) {
  specs.push_back({name + "/kernel", {k, k, d, d_out}, Init::kTruncNormal, true});
  specs.push_back({name + "/bias", {d_out}, Init::kZeros, false});
}

void add_norm(std::vector<ParamSpec>& specs, const std::string& name, int d) {
  specs.push_back({name + "/scale", {d}, Init::kOnes, false});
  specs.push_back({name + "/bias", {d}, Init::kZeros, false});
}

template <typename T>
BasicTensor<T> conv(const BasicTensor<T>& x, const BasicParamSet<T>& p, const std::string& name,
                    std::int64_t stride = 1) {
  return conv2d(x, p[name + "/kernel"], p[name + "/bias"], stride);
}

template <typename T>
BasicTensor<T> norm(const BasicTensor<T>& x, const BasicParamSet<T>& p, const std::string& name) {
  return layernorm(x, p[name + "/scale"], p[name + "/bias"]);
}

// Optional pointwise projection used when a parameter-free op must change width.
template <typename T>
BasicTensor<T> maybe_project(const BasicTensor<T>& x, const BasicParamSet<T>& p, const std::string& prefix) {
  const auto name = prefix + "/proj";
  return p.contains(name + "/kernel") ? conv(x, p, name) : x;
}

}  // namespace

template <typename T>
BasicTensor<T> blockify(const BasicTensor<T>& plane, int block_side) {
  if (plane.rank() != 4) throw DimensionError("blockify expects (b, h, w, d), got " + shape_str(plane.shape()));
  const auto b = plane.dim(0), h = plane.dim(1), w = plane.dim(2), d = plane.dim(3);
  if (block_side <= 0 || h % block_side || w % block_side) {
    throw DimensionError("plane " + shape_str(plane.shape()) + " is not divisible into blocks of side " +
                         std::to_string(block_side));
  }
  const std::int64_t s = block_side;
  const auto grid = reshape(plane, {b, h / s, s, w / s, s, d});
  return reshape(permute(grid, {0, 1, 3, 2, 4, 5}), {b, (h / s) * (w / s), s * s, d});
}

template <typename T>
BasicTensor<T> unblockify(const BasicTensor<T>& blocks) {
  if (blocks.rank() != 4) throw DimensionError("unblockify expects (b, blocks, n, d), got " + shape_str(blocks.shape()));
  const auto b = blocks.dim(0), d = blocks.dim(3);
  const std::int64_t g = exact_sqrt(blocks.dim(1), "block count");
  const std::int64_t s = exact_sqrt(blocks.dim(2), "sequence length");
  const auto grid = reshape(blocks, {b, g, g, s, s, d});
  return reshape(permute(grid, {0, 1, 3, 2, 4, 5}), {b, g * s, g * s, d});
}

void append_aggregation_specs(std::vector<ParamSpec>& specs, const std::string& prefix, AggregationKind kind, int d,
                              int d_out) {
  switch (kind) {
    case AggregationKind::kConvLnMaxpool:
      add_conv(specs, prefix + "/conv", 3, d, d_out);
      add_norm(specs, prefix + "/norm", d_out);
      return;
    case AggregationKind::kConvLnAvgpool:
      add_conv(specs, prefix + "/conv", 3, d, d);
      add_norm(specs, prefix + "/norm", d);
      if (d != d_out) add_conv(specs, prefix + "/proj", 1, d, d_out);
      return;
    case AggregationKind::kConvStride2:
      add_conv(specs, prefix + "/conv", 3, d, d_out);
      return;
    case AggregationKind::kMaxpoolOnly:
    case AggregationKind::kSubsample2x2:
      if (d != d_out) add_conv(specs, prefix + "/proj", 1, d, d_out);
      return;
    case AggregationKind::kPatchMerge:
      specs.push_back({prefix + "/merge/kernel", {4 * d, d_out}, Init::kTruncNormal, true});
      specs.push_back({prefix + "/merge/bias", {d_out}, Init::kZeros, false});
      return;
    case AggregationKind::kConv4x1:
      break;
  }
  throw NotImplementedError("aggregation variant " + std::string(to_string(kind)) + " is reserved but not implemented");
}

template <typename T>
BasicTensor<T> patch_merge(const BasicTensor<T>& plane, const BasicTensor<T>& kernel, const BasicTensor<T>& bias) {
  return linear(space_to_depth(plane, 2), kernel, bias);
}

template <typename T>
BasicTensor<T> subsample_2x2(const BasicTensor<T>& plane) {
  return subsample(plane, 2);
}

template <typename T>
BasicTensor<T> aggregate_plane(const BasicTensor<T>& plane, AggregationKind kind, const BasicParamSet<T>& p,
                               const std::string& prefix) {
  switch (kind) {
    case AggregationKind::kConvLnMaxpool:
      return maxpool2d(norm(conv(plane, p, prefix + "/conv"), p, prefix + "/norm"), 3, 2);
    case AggregationKind::kConvLnAvgpool:
      return maybe_project(avgpool2d(norm(conv(plane, p, prefix + "/conv"), p, prefix + "/norm"), 3, 2), p, prefix);
    case AggregationKind::kConvStride2:
      return conv(plane, p, prefix + "/conv", 2);
    case AggregationKind::kMaxpoolOnly:
      return maybe_project(maxpool2d(plane, 3, 2), p, prefix);
    case AggregationKind::kSubsample2x2:
      return maybe_project(subsample_2x2(plane), p, prefix);
    case AggregationKind::kPatchMerge:
      return patch_merge(plane, p[prefix + "/merge/kernel"], p[prefix + "/merge/bias"]);
    case AggregationKind::kConv4x1:
      break;
  }
  throw NotImplementedError("aggregation variant " + std::string(to_string(kind)) + " is reserved but not implemented");
}

template <typename T>
BasicTensor<T> aggregate_from_plane(const BasicTensor<T>& plane, const AggregationSpec& spec,
                                    const BasicParamSet<T>& p, const std::string& prefix, int block_side) {
  if (plane.rank() != 4) throw DimensionError("aggregate expects a (b, h, w, d) plane, got " + shape_str(plane.shape()));
  const auto b = plane.dim(0), h = plane.dim(1), w = plane.dim(2), d = plane.dim(3);
  const std::int64_t s = block_side;
  if (s <= 0 || h % (2 * s) != 0 || w % (2 * s) != 0) {
    throw HierarchyError("cannot aggregate a " + std::to_string(h) + "x" + std::to_string(w) + " plane of side-" +
                         std::to_string(s) + " blocks; the block count must be a multiple of 4");
  }
  if (spec.plane == Plane::kImage) return blockify(aggregate_plane(plane, spec.kind, p, prefix), block_side);

  const auto groups = (h / (2 * s)) * (w / (2 * s));
  const auto merged = reshape(blockify(plane, 2 * block_side), {b * groups, 2 * s, 2 * s, d});
  const auto reduced = aggregate_plane(merged, spec.kind, p, prefix);
  return reshape(reduced, {b, groups, s * s, reduced.dim(3)});
}

template <typename T>
BasicTensor<T> aggregate(const BasicTensor<T>& blocks, const AggregationSpec& spec, const BasicParamSet<T>& p,
                         const std::string& prefix) {
  if (blocks.rank() != 4) throw DimensionError("aggregate expects (b, blocks, n, d), got " + shape_str(blocks.shape()));
  const auto count = blocks.dim(1);
  if (count < 4 || count % 4 != 0) {
    throw HierarchyError("cannot aggregate " + std::to_string(count) + " blocks; need a multiple of 4");
  }
  return aggregate_from_plane(unblockify(blocks), spec, p, prefix, exact_sqrt(blocks.dim(2), "sequence length"));
}

void append_deaggregation_specs(std::vector<ParamSpec>& specs, const std::string& prefix, DeaggregationKind kind,
                                int d) {
  switch (kind) {
    case DeaggregationKind::kPixelShuffle:
      return;
    case DeaggregationKind::kConvPixelShuffle:
      add_conv(specs, prefix + "/conv", 3, d, d);
      return;
    case DeaggregationKind::kNearestConv:
      add_conv(specs, prefix + "/conv", 3, d, d / 4);
      return;
  }
}

template <typename T>
BasicTensor<T> de_aggregate(const BasicTensor<T>& blocks, DeaggregationKind kind, const BasicParamSet<T>& p,
                            const std::string& prefix) {
  if (blocks.rank() != 4) throw DimensionError("de_aggregate expects (b, blocks, n, d), got " + shape_str(blocks.shape()));
  if (blocks.dim(3) % 4 != 0) {
    throw DimensionError("de_aggregate needs a width divisible by 4, got " + std::to_string(blocks.dim(3)));
  }
  const int side = exact_sqrt(blocks.dim(2), "sequence length");
  const auto plane = unblockify(blocks);
  BasicTensor<T> up;
  switch (kind) {
    case DeaggregationKind::kPixelShuffle:
      up = pixel_shuffle(plane);
      break;
    case DeaggregationKind::kConvPixelShuffle:
      up = pixel_shuffle(conv(plane, p, prefix + "/conv"));
      break;
    case DeaggregationKind::kNearestConv:
      up = conv(upsample_nearest(plane, 2), p, prefix + "/conv");
      break;
  }
  return blockify(up, side);
}

#define NEST_INSTANTIATE_AGGREGATION(T)                                                                      \
  template BasicTensor<T> blockify(const BasicTensor<T>&, int);                                              \
  template BasicTensor<T> unblockify(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> aggregate_plane(const BasicTensor<T>&, AggregationKind, const BasicParamSet<T>&,   \
                                          const std::string&);                                               \
  template BasicTensor<T> aggregate(const BasicTensor<T>&, const AggregationSpec&, const BasicParamSet<T>&,  \
                                    const std::string&);                                                     \
  template BasicTensor<T> aggregate_from_plane(const BasicTensor<T>&, const AggregationSpec&,                \
                                               const BasicParamSet<T>&, const std::string&, int);            \
  template BasicTensor<T> patch_merge(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> subsample_2x2(const BasicTensor<T>&);                                              \
  template BasicTensor<T> de_aggregate(const BasicTensor<T>&, DeaggregationKind, const BasicParamSet<T>&,    \
                                       const std::string&);

NEST_INSTANTIATE_AGGREGATION(float)
NEST_INSTANTIATE_AGGREGATION(double)

}  // namespace nest
