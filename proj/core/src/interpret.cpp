#include "nest/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nest/model.hpp"
#include "nest/ops.hpp"

namespace nest {

namespace {

ParamSet frozen_copy(const ParamSet& params) {
  ParamSet out;
  for (const auto& e : params.entries()) out.add(e.name, e.tensor.detach(), e.decay);
  return out;
}

// (b, h, w, d) -> sample i as (h, w, d).
Tensor sample_of(const Tensor& batch, std::int64_t i) {
  const auto h = batch.dim(1), w = batch.dim(2), d = batch.dim(3);
  const auto values = batch.values();
  const auto size = h * w * d;
  return Tensor::from_vector({h, w, d}, std::vector<float>(values.begin() + i * size, values.begin() + (i + 1) * size));
}

struct PlaneView {
  Tensor values;
  Tensor grad;
};

}  // namespace

bool TraversalPath::consistent() const {
  for (const auto& step : steps) {
    if (step.index < 0 || step.index > 3) return false;
    const auto first_max = std::max_element(step.scores.begin(), step.scores.end()) - step.scores.begin();
    if (first_max != step.index) return false;
  }
  return true;
}

std::string TraversalPath::to_json() const {
  std::ostringstream out;
  out.precision(9);
  out << "{\"class\": " << target_class << ", \"path\": [";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    out << (i ? ", " : "") << "{\"hierarchy\": " << s.level << ", \"index\": " << s.index << ", \"scores\": [[" << s.scores[0]
        << ", " << s.scores[1] << "], [" << s.scores[2] << ", " << s.scores[3] << "]], \"tie\": " << (s.tie ? "true" : "false")
        << "}";
  }
  out << "]}";
  return out.str();
}

TraversalPath gradcat_from_maps(const std::vector<Tensor>& planes, const std::vector<Tensor>& grads, int target_class,
                                const GradcatOptions& options) {
  if (planes.size() < 2) throw TraversalError("traversal needs at least two hierarchy levels");
  if (grads.size() != planes.size()) throw TraversalError("one gradient map is needed per plane");
  const double sign = options.positive_gradient ? 1.0 : -1.0;
  TraversalPath path;
  path.target_class = target_class;

  const auto top = static_cast<int>(planes.size()) - 1;
  std::int64_t ry = 0, rx = 0, side = planes[static_cast<std::size_t>(top)].dim(0);
  for (int level = top; level >= 1; --level) {
    const auto& a = planes[static_cast<std::size_t>(level)];
    const auto& g = grads[static_cast<std::size_t>(level)];
    if (a.rank() != 3 || a.shape() != g.shape()) {
      throw TraversalError("plane and gradient at level " + std::to_string(level) + " disagree: " +
                           shape_str(a.shape()) + " vs " + shape_str(g.shape()));
    }
    const auto w = a.dim(1), d = a.dim(2);
    if (side % 2 != 0 || ry + side > a.dim(0) || rx + side > w) {
      throw TraversalError("region of side " + std::to_string(side) + " cannot be split into 2x2 partitions");
    }
    const auto half = side / 2;
    const auto av = a.values();
    const auto gv = g.values();
    TraversalStep step;
    step.level = level;
    for (int q = 0; q < 4; ++q) {
      const auto y0 = ry + (q / 2) * half, x0 = rx + (q % 2) * half;
      double total = 0;
      for (auto y = y0; y < y0 + half; ++y)
        for (auto x = x0; x < x0 + half; ++x) {
          const auto base = (y * w + x) * d;
          for (std::int64_t c = 0; c < d; ++c) total += static_cast<double>(av[base + c]) * gv[base + c];
        }
      step.scores[static_cast<std::size_t>(q)] = sign * total / static_cast<double>(half * half * d);
    }
    step.index = static_cast<int>(std::max_element(step.scores.begin(), step.scores.end()) - step.scores.begin());
    const auto best = step.scores[static_cast<std::size_t>(step.index)];
    step.tie = std::count(step.scores.begin(), step.scores.end(), best) > 1;
    path.steps.push_back(step);
    // The chosen partition becomes the region one level down, where the
    // plane is twice as large.
    ry = 2 * (ry + (step.index / 2) * half);
    rx = 2 * (rx + (step.index % 2) * half);
  }
  return path;
}

std::vector<TraversalPath> gradcat(const NestConfig& config, const ParamSet& params, const Tensor& images,
                                   const std::vector<int>& classes, const GradcatOptions& options) {
  if (config.depth < 2) throw TraversalError("traversal needs a model with at least two hierarchy levels");
  if (images.rank() != 4 || static_cast<std::int64_t>(classes.size()) != images.dim(0)) {
    throw DimensionError("gradcat needs one class per image");
  }
  for (int c : classes) {
    if (c < 0 || c >= config.num_classes) throw RangeError("class " + std::to_string(c) + " out of range");
  }
  // Gradients flow from a grad-requiring input so that parameters stay untouched.
  const ParamSet frozen = frozen_copy(params);
  const Tensor input = Tensor::from_vector(images.shape(), std::vector<float>(images.values().begin(), images.values().end()), true);
  const auto result = forward(config, frozen, input);

  // Samples are independent, so the gradient of the summed target logits
  // at sample i is that sample's own d Y_c / d A.
  const auto b = images.dim(0);
  std::vector<float> mask(static_cast<std::size_t>(b * config.num_classes), 0.0f);
  for (std::int64_t i = 0; i < b; ++i) mask[static_cast<std::size_t>(i * config.num_classes + classes[i])] = 1.0f;
  const auto target = sum(mul(result.logits, Tensor::from_vector(result.logits.shape(), std::move(mask))));
  target.backward();

  // The top plane goes straight into the head LayerNorm, whose scale
  // invariance makes activation times gradient vanish at every position.
  // The normalized map the pooled head reads is scored there instead.
  NoGradGuard no_grad;
  auto view = [](const Tensor& t) {
    const auto grad = t.has_grad() ? Tensor::from_vector(t.shape(), {t.grad().begin(), t.grad().end()})
                                   : Tensor::zeros(t.shape());
    return PlaneView{t.detach(), grad};
  };
  std::vector<PlaneView> maps;
  for (const auto& plane : result.planes) maps.push_back(view(plane));
  maps.back() = view(result.features);

  std::vector<TraversalPath> paths;
  for (std::int64_t i = 0; i < b; ++i) {
    std::vector<Tensor> planes, grads;
    for (const auto& m : maps) {
      planes.push_back(sample_of(m.values, i));
      grads.push_back(sample_of(m.grad, i));
    }
    paths.push_back(gradcat_from_maps(planes, grads, classes[static_cast<std::size_t>(i)], options));
  }
  return paths;
}

Heatmap cam_from_features(const Tensor& features, const Tensor& head_kernel, int target_class) {
  const bool batched = features.rank() == 4;
  if ((!batched && features.rank() != 3) || (batched && features.dim(0) != 1)) {
    throw DimensionError("cam expects (h, w, d) features, got " + shape_str(features.shape()));
  }
  const auto d = features.dim(-1);
  if (head_kernel.rank() != 2 || head_kernel.dim(0) != d) {
    throw DimensionError("head kernel " + shape_str(head_kernel.shape()) + " does not match width " + std::to_string(d));
  }
  const auto classes = head_kernel.dim(1);
  if (target_class < 0 || target_class >= classes) {
    throw RangeError("class " + std::to_string(target_class) + " out of range for " + std::to_string(classes) + " classes");
  }
  Heatmap map;
  map.height = static_cast<int>(features.dim(-3));
  map.width = static_cast<int>(features.dim(-2));
  map.target_class = target_class;
  map.values.resize(static_cast<std::size_t>(map.height) * map.width);
  const auto f = features.values();
  const auto w = head_kernel.values();
  for (std::size_t p = 0; p < map.values.size(); ++p) {
    double acc = 0;
    for (std::int64_t k = 0; k < d; ++k) acc += static_cast<double>(f[p * d + k]) * w[k * classes + target_class];
    map.values[p] = static_cast<float>(acc);
  }
  return map;
}

Heatmap cam(const NestConfig& config, const ParamSet& params, const Tensor& image, int target_class) {
  if (image.rank() != 4 || image.dim(0) != 1) throw DimensionError("cam takes a single (1, H, W, c) image");
  NoGradGuard no_grad;
  const auto result = forward(config, params, image);
  return cam_from_features(result.features, params["head/kernel"], target_class);
}

Heatmap upsample_bilinear(const Heatmap& map, int height, int width) {
  if (height <= 0 || width <= 0) throw DimensionError("upsample target must be positive");
  Heatmap out{height, width, map.target_class, std::vector<float>(static_cast<std::size_t>(height) * width)};
  auto source = [](int dst, int in, int out_size) {
    const double s = (dst + 0.5) * in / out_size - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  for (int y = 0; y < height; ++y) {
    const double sy = source(y, map.height, height);
    const int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, map.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < width; ++x) {
      const double sx = source(x, map.width, width);
      const int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, map.width - 1);
      const double fx = sx - x0;
      const double top = map.at(y0, x0) * (1 - fx) + map.at(y0, x1) * fx;
      const double bottom = map.at(y1, x0) * (1 - fx) + map.at(y1, x1) * fx;
      out.values[static_cast<std::size_t>(y) * width + x] = static_cast<float>(top * (1 - fy) + bottom * fy);
    }
  }
  return out;
}

Heatmap normalize_minmax(const Heatmap& map) {
  Heatmap out = map;
  if (map.values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double range = static_cast<double>(*hi) - *lo;
  for (auto& v : out.values) v = range > 0 ? static_cast<float>((v - *lo) / range) : 1.0f;
  return out;
}

std::optional<BBox> cam_to_bbox(const Heatmap& map, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw RangeError("threshold must lie in [0, 1]");
  const Heatmap norm = normalize_minmax(map);
  const int h = norm.height, w = norm.width;
  std::vector<int> label(norm.values.size(), -1);
  struct Component {
    std::size_t size = 0;
    float peak = 0;
    BBox box;
  };
  std::optional<Component> best;
  std::vector<int> stack;
  int next_label = 0;
  for (int start = 0; start < h * w; ++start) {
    if (label[start] >= 0 || norm.values[start] < threshold) continue;
    Component comp;
    comp.box = {start % w, start / w, start % w + 1, start / w + 1};
    comp.peak = norm.values[start];
    label[start] = next_label;
    stack.assign(1, start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int y = p / w, x = p % w;
      ++comp.size;
      comp.peak = std::max(comp.peak, norm.values[p]);
      comp.box = {std::min(comp.box.x0, x), std::min(comp.box.y0, y), std::max(comp.box.x1, x + 1),
                  std::max(comp.box.y1, y + 1)};
      const int neighbours[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& [ny, nx] : neighbours) {
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const int q = ny * w + nx;
        if (label[q] < 0 && norm.values[q] >= threshold) {
          label[q] = next_label;
          stack.push_back(q);
        }
      }
    }
    ++next_label;
    // Components are discovered in raster order of their first pixel, so
    // strict comparison keeps the earlier one on a full tie.
    if (!best || comp.size > best->size || (comp.size == best->size && comp.peak > best->peak)) best = comp;
  }
  if (!best) return std::nullopt;
  return best->box;
}

}  // namespace nest
