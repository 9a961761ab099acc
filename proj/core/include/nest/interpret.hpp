#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "nest/config.hpp"
#include "nest/params.hpp"
#include "nest/tensor.hpp"

namespace nest {

// Quadrants are numbered in raster order: 0 top-left, 1 top-right,
// 2 bottom-left, 3 bottom-right.
struct TraversalStep {
  int level = 0;  // model level whose plane was partitioned (0 = bottom)
  int index = 0;
  std::array<double, 4> scores{};
  bool tie = false;
};

struct TraversalPath {
  int target_class = 0;
  std::vector<TraversalStep> steps;  // top to bottom

  // Every recorded index is the first maximum of its scores.
  bool consistent() const;
  std::string to_json() const;
};

struct GradcatOptions {
  // true: score = activation * gradient; false: activation * (-gradient).
  bool positive_gradient = true;
};

// Greedy descent over cached planes. planes[l] and grads[l] are (h_l, w_l, d_l)
// slices of one sample, level 0 at the bottom; every plane is twice the
// side of the one above it.
TraversalPath gradcat_from_maps(const std::vector<Tensor>& planes, const std::vector<Tensor>& grads, int target_class,
                                const GradcatOptions& options = {});

// Runs the model, back-propagates each sample's target logit and traverses.
// images: (b, H, W, c); one class per image.
std::vector<TraversalPath> gradcat(const NestConfig& config, const ParamSet& params, const Tensor& images,
                                   const std::vector<int>& classes, const GradcatOptions& options = {});

struct Heatmap {
  int height = 0;
  int width = 0;
  int target_class = 0;
  std::vector<float> values;  // raster order

  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// sum_k w[k, c] * features(p, k) for features (h, w, d) or (1, h, w, d).
Heatmap cam_from_features(const Tensor& features, const Tensor& head_kernel, int target_class);
Heatmap cam(const NestConfig& config, const ParamSet& params, const Tensor& image, int target_class);
Heatmap upsample_bilinear(const Heatmap& map, int height, int width);
// Scales into [0, 1]; a constant map becomes all ones.
Heatmap normalize_minmax(const Heatmap& map);

// Half-open pixel box [x0, x1) x [y0, y1).
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int area() const { return (x1 - x0) * (y1 - y0); }
  bool operator==(const BBox&) const = default;
};

// Tightest box around the largest 4-connected component of
// {p : normalized(p) >= threshold}. Equal-sized components are ranked by
// their peak value, then by their first pixel in raster order.
std::optional<BBox> cam_to_bbox(const Heatmap& map, double threshold);

}  // namespace nest
