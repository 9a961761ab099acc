#include "nest/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "blas.hpp"

namespace nest {

namespace {

template <typename T>
using Backward = std::function<void(Node<T>&)>;

template <typename T>
void check_finite(std::string_view op, const std::vector<T>& values) {
  for (const T v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value produced by " + std::string(op));
  }
}

// Builds an op result; parents and the backward rule are only attached
// when recording is on and some input needs a gradient.
template <typename T>
BasicTensor<T> make_result(std::string_view op, Shape shape, std::vector<T> value,
                           std::initializer_list<const BasicTensor<T>*> inputs, Backward<T> backward) {
  check_finite(op, value);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto* in : inputs) needs_grad = needs_grad || (in->defined() && in->requires_grad());
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const auto* in : inputs) node->parents.push_back(in->defined() ? in->node_ptr() : nullptr);
    node->backward = std::move(backward);
  }
  return BasicTensor<T>(std::move(node));
}

// Gradient buffer of parent i, or nullptr when it takes no gradient.
template <typename T>
T* grad_of(Node<T>& self, std::size_t i) {
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return nullptr;
  return p->grad_buffer().data();
}

template <typename T>
const T* value_of(Node<T>& self, std::size_t i) {
  return self.parents[i]->value.data();
}

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
  }
  return axis;
}

// Number of times b repeats inside a when b's shape is a suffix of a's.
std::int64_t suffix_repeats(std::string_view op, const Shape& a, const Shape& b) {
  const bool ok = b.size() <= a.size() && std::equal(b.begin(), b.end(), a.end() - static_cast<long>(b.size()));
  if (!ok) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(b) + " does not broadcast against " +
                         shape_str(a));
  }
  return numel(a) / numel(b);
}

void require_rank(std::string_view op, const Shape& shape, std::size_t rank) {
  if (shape.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(shape));
  }
}

// Output = input[index[i]]; gradient scatters back. Covers every pure
// data-movement op whose map is cheap to materialize.
template <typename T>
BasicTensor<T> gather(std::string_view op, const BasicTensor<T>& x, Shape out_shape,
                      std::vector<std::uint32_t> index) {
  const auto& xv = x.values();
  std::vector<T> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = xv[index[i]];
  return make_result<T>(op, std::move(out_shape), std::move(out), {&x},
                        [index = std::move(index)](Node<T>& self) {
                          T* gx = grad_of(self, 0);
                          if (!gx) return;
                          for (std::size_t i = 0; i < index.size(); ++i) gx[index[i]] += self.grad[i];
                        });
}

struct Same {
  std::int64_t out;
  std::int64_t pad_before;
};

Same same_padding(std::int64_t in, std::int64_t window, std::int64_t stride) {
  const std::int64_t out = (in + stride - 1) / stride;
  const std::int64_t total = std::max<std::int64_t>((out - 1) * stride + window - in, 0);
  return {out, total / 2};
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const auto reps = suffix_repeats("add", a.shape(), b.shape());
  const auto inner = b.numel();
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::int64_t r = 0; r < reps; ++r) {
    T* o = out.data() + r * inner;
    for (std::int64_t i = 0; i < inner; ++i) o[i] += bv[i];
  }
  return make_result<T>("add", a.shape(), std::move(out), {&a, &b}, [reps, inner](Node<T>& self) {
    if (T* ga = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    }
    if (T* gb = grad_of(self, 1)) {
      for (std::int64_t r = 0; r < reps; ++r) {
        const T* g = self.grad.data() + r * inner;
        for (std::int64_t i = 0; i < inner; ++i) gb[i] += g[i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const auto reps = suffix_repeats("sub", a.shape(), b.shape());
  const auto inner = b.numel();
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::int64_t r = 0; r < reps; ++r) {
    T* o = out.data() + r * inner;
    for (std::int64_t i = 0; i < inner; ++i) o[i] -= bv[i];
  }
  return make_result<T>("sub", a.shape(), std::move(out), {&a, &b}, [reps, inner](Node<T>& self) {
    if (T* ga = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    }
    if (T* gb = grad_of(self, 1)) {
      for (std::int64_t r = 0; r < reps; ++r) {
        const T* g = self.grad.data() + r * inner;
        for (std::int64_t i = 0; i < inner; ++i) gb[i] -= g[i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const auto reps = suffix_repeats("mul", a.shape(), b.shape());
  const auto inner = b.numel();
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::int64_t r = 0; r < reps; ++r) {
    T* o = out.data() + r * inner;
    for (std::int64_t i = 0; i < inner; ++i) o[i] *= bv[i];
  }
  return make_result<T>("mul", a.shape(), std::move(out), {&a, &b}, [reps, inner](Node<T>& self) {
    const T* av = value_of(self, 0);
    const T* bv = value_of(self, 1);
    T* ga = grad_of(self, 0);
    T* gb = grad_of(self, 1);
    for (std::int64_t r = 0; r < reps; ++r) {
      const T* g = self.grad.data() + r * inner;
      const T* ar = av + r * inner;
      for (std::int64_t i = 0; i < inner; ++i) {
        if (ga) ga[r * inner + i] += g[i] * bv[i];
        if (gb) gb[i] += g[i] * ar[i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  std::vector<T> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= factor;
  return make_result<T>("scale", x.shape(), std::move(out), {&x}, [factor](Node<T>& self) {
    if (T* gx = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += factor * self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  std::vector<T> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return make_result<T>("relu", x.shape(), std::move(out), {&x}, [](Node<T>& self) {
    if (T* gx = grad_of(self, 0)) {
      const T* xv = value_of(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (xv[i] > T(0)) gx[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
  std::vector<T> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = std::tanh(v);
  return make_result<T>("tanh", x.shape(), std::move(out), {&x}, [](Node<T>& self) {
    if (T* gx = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T y = self.value[i];
        gx[i] += self.grad[i] * (T(1) - y * y);
      }
    }
  });
}

template <typename T>
BasicTensor<T> scale_samples(const BasicTensor<T>& x, std::span<const T> factors) {
  if (x.rank() < 1 || static_cast<std::int64_t>(factors.size()) != x.dim(0)) {
    throw DimensionError("scale_samples: " + std::to_string(factors.size()) + " factors for shape " +
                         shape_str(x.shape()));
  }
  const auto inner = x.numel() / x.dim(0);
  std::vector<T> f(factors.begin(), factors.end());
  std::vector<T> out(x.values().begin(), x.values().end());
  for (std::size_t s = 0; s < f.size(); ++s) {
    for (std::int64_t i = 0; i < inner; ++i) out[s * inner + i] *= f[s];
  }
  return make_result<T>("scale_samples", x.shape(), std::move(out), {&x},
                        [f = std::move(f), inner](Node<T>& self) {
                          T* gx = grad_of(self, 0);
                          if (!gx) return;
                          for (std::size_t s = 0; s < f.size(); ++s) {
                            for (std::int64_t i = 0; i < inner; ++i) gx[s * inner + i] += f[s] * self.grad[s * inner + i];
                          }
                        });
}

// ---------------------------------------------------------------- reductions

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double acc = 0;
  for (const T v : x.values()) acc += v;
  return make_result<T>("sum", {}, {static_cast<T>(acc)}, {&x}, [](Node<T>& self) {
    if (T* gx = grad_of(self, 0)) {
      const auto n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[0];
    }
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
BasicTensor<T> sum_axis(const BasicTensor<T>& x, std::int64_t axis) {
  axis = normalize_axis(axis, x.rank());
  const auto& s = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::int64_t i = axis + 1; i < x.rank(); ++i) inner *= s[i];
  const auto len = s[axis];
  Shape out_shape;
  for (std::int64_t i = 0; i < x.rank(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  std::vector<double> acc(static_cast<std::size_t>(outer * inner), 0.0);
  const auto xv = x.values();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t l = 0; l < len; ++l) {
      const T* src = xv.data() + (o * len + l) * inner;
      double* dst = acc.data() + o * inner;
      for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  std::vector<T> out(acc.begin(), acc.end());
  return make_result<T>("sum_axis", std::move(out_shape), std::move(out), {&x},
                        [outer, inner, len](Node<T>& self) {
                          T* gx = grad_of(self, 0);
                          if (!gx) return;
                          for (std::int64_t o = 0; o < outer; ++o) {
                            for (std::int64_t l = 0; l < len; ++l) {
                              T* dst = gx + (o * len + l) * inner;
                              const T* g = self.grad.data() + o * inner;
                              for (std::int64_t i = 0; i < inner; ++i) dst[i] += g[i];
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> mean_axis(const BasicTensor<T>& x, std::int64_t axis) {
  const auto len = x.dim(axis);
  return scale(sum_axis(x, axis), T(1) / static_cast<T>(len));
}

// ---------------------------------------------------------------- data movement

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw DimensionError("reshape: more than one inferred extent");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0 && x.numel() % known == 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {&x}, [](Node<T>& self) {
    if (T* gx = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, std::span<const std::int64_t> perm) {
  const auto rank = x.rank();
  if (static_cast<std::int64_t>(perm.size()) != rank) {
    throw DimensionError("permute: permutation of length " + std::to_string(perm.size()) + " for shape " +
                         shape_str(x.shape()));
  }
  std::vector<bool> used(static_cast<std::size_t>(rank), false);
  for (auto p : perm) {
    if (p < 0 || p >= rank || used[static_cast<std::size_t>(p)]) throw DimensionError("permute: invalid permutation");
    used[static_cast<std::size_t>(p)] = true;
  }
  const auto& s = x.shape();
  Shape out_shape(static_cast<std::size_t>(rank));
  std::vector<std::int64_t> in_strides(static_cast<std::size_t>(rank));
  std::int64_t stride = 1;
  for (std::int64_t i = rank - 1; i >= 0; --i) {
    in_strides[static_cast<std::size_t>(i)] = stride;
    stride *= s[static_cast<std::size_t>(i)];
  }
  std::vector<std::int64_t> src_strides(static_cast<std::size_t>(rank));
  for (std::int64_t i = 0; i < rank; ++i) {
    out_shape[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    src_strides[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  // Walks the output in order; `visit(out_index, in_index)`.
  auto walk = [out_shape, src_strides, rank](auto&& visit) {
    const auto total = numel(out_shape);
    if (rank == 0) {
      visit(0, 0);
      return;
    }
    std::vector<std::int64_t> counter(static_cast<std::size_t>(rank), 0);
    const auto last = static_cast<std::size_t>(rank - 1);
    const auto last_extent = out_shape[last];
    const auto last_stride = src_strides[last];
    std::int64_t src = 0;
    for (std::int64_t o = 0; o < total; o += last_extent) {
      for (std::int64_t j = 0; j < last_extent; ++j) visit(o + j, src + j * last_stride);
      for (std::int64_t ax = rank - 2; ax >= 0; --ax) {
        const auto a = static_cast<std::size_t>(ax);
        src += src_strides[a];
        if (++counter[a] < out_shape[a]) break;
        src -= src_strides[a] * out_shape[a];
        counter[a] = 0;
      }
    }
  };
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  walk([&](std::int64_t o, std::int64_t i) { out[static_cast<std::size_t>(o)] = xv[static_cast<std::size_t>(i)]; });
  return make_result<T>("permute", out_shape, std::move(out), {&x}, [walk](Node<T>& self) {
    T* gx = grad_of(self, 0);
    if (!gx) return;
    const T* g = self.grad.data();
    walk([&](std::int64_t o, std::int64_t i) { gx[i] += g[o]; });
  });
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::int64_t axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, x.rank());
  const auto& s = x.shape();
  const auto extent = s[static_cast<std::size_t>(axis)];
  if (start < 0 || length <= 0 || start + length > extent) {
    throw DimensionError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis of extent " + std::to_string(extent));
  }
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (std::int64_t i = axis + 1; i < x.rank(); ++i) inner *= s[static_cast<std::size_t>(i)];
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(axis)] = length;
  std::vector<std::uint32_t> index;
  index.reserve(static_cast<std::size_t>(outer * length * inner));
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t l = 0; l < length; ++l) {
      const auto base = (o * extent + start + l) * inner;
      for (std::int64_t i = 0; i < inner; ++i) index.push_back(static_cast<std::uint32_t>(base + i));
    }
  }
  return gather<T>("slice", x, std::move(out_shape), std::move(index));
}

template <typename T>
BasicTensor<T> space_to_depth(const BasicTensor<T>& x, std::int64_t factor) {
  require_rank("space_to_depth", x.shape(), 4);
  const auto b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (factor <= 0 || h % factor || w % factor) {
    throw DimensionError("space_to_depth: spatial dims of " + shape_str(x.shape()) + " not divisible by " +
                         std::to_string(factor));
  }
  const auto oh = h / factor, ow = w / factor, oc = factor * factor * c;
  std::vector<std::uint32_t> index(static_cast<std::size_t>(x.numel()));
  std::size_t o = 0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx)
        for (std::int64_t dy = 0; dy < factor; ++dy)
          for (std::int64_t dx = 0; dx < factor; ++dx)
            for (std::int64_t ch = 0; ch < c; ++ch)
              index[o++] = static_cast<std::uint32_t>(((n * h + y * factor + dy) * w + xx * factor + dx) * c + ch);
  return gather<T>("space_to_depth", x, {b, oh, ow, oc}, std::move(index));
}

template <typename T>
BasicTensor<T> depth_to_space(const BasicTensor<T>& x, std::int64_t factor) {
  require_rank("depth_to_space", x.shape(), 4);
  const auto b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (factor <= 0 || c % (factor * factor)) {
    throw DimensionError("depth_to_space: channels of " + shape_str(x.shape()) + " not divisible by " +
                         std::to_string(factor * factor));
  }
  const auto oc = c / (factor * factor), oh = h * factor, ow = w * factor;
  std::vector<std::uint32_t> index(static_cast<std::size_t>(x.numel()));
  std::size_t o = 0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx)
        for (std::int64_t ch = 0; ch < oc; ++ch) {
          const auto dy = y % factor, dx = xx % factor;
          index[o++] = static_cast<std::uint32_t>(((n * h + y / factor) * w + xx / factor) * c +
                                                  (dy * factor + dx) * oc + ch);
        }
  return gather<T>("depth_to_space", x, {b, oh, ow, oc}, std::move(index));
}

template <typename T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& x) {
  require_rank("pixel_shuffle", x.shape(), 4);
  if (x.dim(3) % 4 != 0) {
    throw DimensionError("pixel_shuffle: channel count of " + shape_str(x.shape()) + " not divisible by 4");
  }
  return depth_to_space(x, 2);
}

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, std::int64_t factor) {
  require_rank("upsample_nearest", x.shape(), 4);
  const auto b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const auto oh = h * factor, ow = w * factor;
  std::vector<std::uint32_t> index(static_cast<std::size_t>(b * oh * ow * c));
  std::size_t o = 0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx)
        for (std::int64_t ch = 0; ch < c; ++ch)
          index[o++] = static_cast<std::uint32_t>(((n * h + y / factor) * w + xx / factor) * c + ch);
  return gather<T>("upsample_nearest", x, {b, oh, ow, c}, std::move(index));
}

template <typename T>
BasicTensor<T> subsample(const BasicTensor<T>& x, std::int64_t factor) {
  require_rank("subsample", x.shape(), 4);
  const auto b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (factor <= 0 || h % factor || w % factor) {
    throw DimensionError("subsample: spatial dims of " + shape_str(x.shape()) + " not divisible by " +
                         std::to_string(factor));
  }
  const auto oh = h / factor, ow = w / factor;
  std::vector<std::uint32_t> index(static_cast<std::size_t>(b * oh * ow * c));
  std::size_t o = 0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx)
        for (std::int64_t ch = 0; ch < c; ++ch)
          index[o++] = static_cast<std::uint32_t>(((n * h + y * factor) * w + xx * factor) * c + ch);
  return gather<T>("subsample", x, {b, oh, ow, c}, std::move(index));
}

// ---------------------------------------------------------------- contractions

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_b) {
  const auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                          (transpose_b ? " (b transposed)" : ""));
  };
  if (a.rank() < 2 || b.rank() < 2) throw mismatch();
  const auto m = a.dim(-2), k = a.dim(-1);
  const auto kb = transpose_b ? b.dim(-1) : b.dim(-2);
  const auto p = transpose_b ? b.dim(-2) : b.dim(-1);
  if (k != kb) throw mismatch();

  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  const bool flat_b = batch_b.empty();
  const bool flat_a = batch_a.empty() && !flat_b;
  if (!flat_b && !flat_a && batch_a != batch_b) throw mismatch();

  Shape out_shape = flat_a ? batch_b : batch_a;
  out_shape.push_back(m);
  out_shape.push_back(p);

  // When b is a plain matrix the batch folds into the row dimension.
  const std::int64_t batches = flat_b ? 1 : numel(flat_a ? batch_b : batch_a);
  const std::int64_t rows = flat_b ? a.numel() / k : m;
  const std::int64_t a_step = flat_a ? 0 : rows * k;
  const std::int64_t b_step = flat_b ? 0 : k * p;
  const std::int64_t c_step = rows * p;
  const int ldb = static_cast<int>(transpose_b ? k : p);

  std::vector<T> out(static_cast<std::size_t>(batches * c_step));
  const T* av = a.values().data();
  const T* bv = b.values().data();
  for (std::int64_t i = 0; i < batches; ++i) {
    detail::gemm(false, transpose_b, static_cast<int>(rows), static_cast<int>(p), static_cast<int>(k), T(1),
                 av + i * a_step, static_cast<int>(k), bv + i * b_step, ldb, T(0), out.data() + i * c_step,
                 static_cast<int>(p));
  }
  return make_result<T>(
      "matmul", std::move(out_shape), std::move(out), {&a, &b},
      [=](Node<T>& self) {
        const T* av = value_of(self, 0);
        const T* bv = value_of(self, 1);
        T* ga = grad_of(self, 0);
        T* gb = grad_of(self, 1);
        const T* g = self.grad.data();
        const int r = static_cast<int>(rows), kk = static_cast<int>(k), pp = static_cast<int>(p);
        for (std::int64_t i = 0; i < batches; ++i) {
          const T* gi = g + i * c_step;
          if (ga) {
            // dA = dC * op(B)^T
            detail::gemm(false, !transpose_b, r, kk, pp, T(1), gi, pp, bv + i * b_step, ldb, T(1), ga + i * a_step,
                         kk);
          }
          if (gb) {
            if (transpose_b) {
              // dB = dC^T * A
              detail::gemm(true, false, pp, kk, r, T(1), gi, pp, av + i * a_step, kk, T(1), gb + i * b_step, kk);
            } else {
              // dB = A^T * dC
              detail::gemm(true, false, kk, pp, r, T(1), av + i * a_step, kk, gi, pp, T(1), gb + i * b_step, pp);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.dim(-1) != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  const auto in = weight.dim(0), out_dim = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  const auto rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<T> out(static_cast<std::size_t>(rows * out_dim), T(0));
  if (bias.defined()) {
    const auto bv = bias.values();
    for (std::int64_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * out_dim);
  }
  detail::gemm(false, false, static_cast<int>(rows), static_cast<int>(out_dim), static_cast<int>(in), T(1),
               x.values().data(), static_cast<int>(in), weight.values().data(), static_cast<int>(out_dim), T(1),
               out.data(), static_cast<int>(out_dim));
  return make_result<T>("linear", std::move(out_shape), std::move(out), {&x, &weight, &bias},
                        [rows, in, out_dim](Node<T>& self) {
                          const T* g = self.grad.data();
                          const int r = static_cast<int>(rows), i = static_cast<int>(in), o = static_cast<int>(out_dim);
                          if (T* gx = grad_of(self, 0)) {
                            detail::gemm(false, true, r, i, o, T(1), g, o, value_of(self, 1), o, T(1), gx, i);
                          }
                          if (T* gw = grad_of(self, 1)) {
                            detail::gemm(true, false, i, o, r, T(1), value_of(self, 0), i, g, o, T(1), gw, o);
                          }
                          if (T* gb = grad_of(self, 2)) {
                            for (std::int64_t row = 0; row < rows; ++row) {
                              for (std::int64_t j = 0; j < out_dim; ++j) gb[j] += g[row * out_dim + j];
                            }
                          }
                        });
}

// ---------------------------------------------------------------- normalization

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::int64_t axis) {
  axis = normalize_axis(axis, x.rank());
  const auto& s = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (std::int64_t i = axis + 1; i < x.rank(); ++i) inner *= s[static_cast<std::size_t>(i)];
  const auto len = s[static_cast<std::size_t>(axis)];
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const auto base = o * len * inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t l = 0; l < len; ++l) mx = std::max(mx, xv[base + l * inner]);
      double total = 0;
      for (std::int64_t l = 0; l < len; ++l) {
        const T e = std::exp(xv[base + l * inner] - mx);
        out[base + l * inner] = e;
        total += e;
      }
      const T inv = static_cast<T>(1.0 / total);
      for (std::int64_t l = 0; l < len; ++l) out[base + l * inner] *= inv;
    }
  }
  return make_result<T>("softmax", s, std::move(out), {&x}, [outer, inner, len](Node<T>& self) {
    T* gx = grad_of(self, 0);
    if (!gx) return;
    const T* y = self.value.data();
    const T* g = self.grad.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t i = 0; i < inner; ++i) {
        const auto base = o * len * inner + i;
        double dot = 0;
        for (std::int64_t l = 0; l < len; ++l) dot += static_cast<double>(g[base + l * inner]) * y[base + l * inner];
        for (std::int64_t l = 0; l < len; ++l) {
          const auto idx = base + l * inner;
          gx[idx] += y[idx] * (g[idx] - static_cast<T>(dot));
        }
      }
    }
  });
}

template <typename T>
BasicTensor<T> layernorm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta, T eps) {
  if (x.rank() < 1) throw DimensionError("layernorm: scalar input");
  const auto d = x.dim(-1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layernorm: affine params " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                         " do not match input " + shape_str(x.shape()));
  }
  if (!(eps > T(0))) throw ContractError("layernorm: eps must be positive");
  const auto rows = x.numel() / d;
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<T> xhat(xv.size());
  std::vector<T> rstd(static_cast<std::size_t>(rows));
  std::vector<T> out(xv.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    double mu = 0;
    for (std::int64_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0;
    for (std::int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    rstd[static_cast<std::size_t>(r)] = static_cast<T>(inv);
    for (std::int64_t j = 0; j < d; ++j) {
      const auto idx = static_cast<std::size_t>(r * d + j);
      xhat[idx] = static_cast<T>((row[j] - mu) * inv);
      out[idx] = xhat[idx] * gv[static_cast<std::size_t>(j)] + bv[static_cast<std::size_t>(j)];
    }
  }
  return make_result<T>("layernorm", x.shape(), std::move(out), {&x, &gamma, &beta},
                        [xhat = std::move(xhat), rstd = std::move(rstd), rows, d](Node<T>& self) {
                          const T* g = self.grad.data();
                          const T* gam = value_of(self, 1);
                          T* gx = grad_of(self, 0);
                          T* ggam = grad_of(self, 1);
                          T* gbet = grad_of(self, 2);
                          for (std::int64_t r = 0; r < rows; ++r) {
                            const T* gr = g + r * d;
                            const T* xh = xhat.data() + r * d;
                            if (ggam || gbet) {
                              for (std::int64_t j = 0; j < d; ++j) {
                                if (ggam) ggam[j] += gr[j] * xh[j];
                                if (gbet) gbet[j] += gr[j];
                              }
                            }
                            if (!gx) continue;
                            double mean_dxh = 0, mean_dxh_xh = 0;
                            for (std::int64_t j = 0; j < d; ++j) {
                              const double dxh = static_cast<double>(gr[j]) * gam[j];
                              mean_dxh += dxh;
                              mean_dxh_xh += dxh * xh[j];
                            }
                            mean_dxh /= static_cast<double>(d);
                            mean_dxh_xh /= static_cast<double>(d);
                            const double inv = rstd[static_cast<std::size_t>(r)];
                            for (std::int64_t j = 0; j < d; ++j) {
                              const double dxh = static_cast<double>(gr[j]) * gam[j];
                              gx[r * d + j] += static_cast<T>(inv * (dxh - mean_dxh - xh[j] * mean_dxh_xh));
                            }
                          }
                        });
}

// ---------------------------------------------------------------- spatial

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      std::int64_t stride) {
  require_rank("conv2d", x.shape(), 4);
  require_rank("conv2d kernel", kernel.shape(), 4);
  const auto b = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const auto kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  if (kernel.dim(2) != cin) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " has " + std::to_string(cin) +
                         " channels but kernel " + shape_str(kernel.shape()) + " expects " +
                         std::to_string(kernel.dim(2)));
  }
  if (stride != 1 && stride != 2) throw DimensionError("conv2d: stride must be 1 or 2");
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(cout) +
                         " output channels");
  }
  const auto py = same_padding(h, kh, stride);
  const auto px = same_padding(w, kw, stride);
  const auto oh = py.out, ow = px.out;
  const auto kdim = kh * kw * cin;
  const auto pixels = oh * ow;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1;

  // Fills cols (pixels x kdim) for image n.
  auto im2col = [=](const T* image, std::vector<T>& cols) {
    cols.assign(static_cast<std::size_t>(pixels * kdim), T(0));
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        T* dst = cols.data() + (oy * ow + ox) * kdim;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          const auto iy = oy * stride - py.pad_before + ky;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const auto ix = ox * stride - px.pad_before + kx;
            if (ix < 0 || ix >= w) continue;
            std::copy_n(image + (iy * w + ix) * cin, cin, dst + (ky * kw + kx) * cin);
          }
        }
      }
  };

  std::vector<T> out(static_cast<std::size_t>(b * pixels * cout), T(0));
  if (bias.defined()) {
    const auto bv = bias.values();
    for (std::int64_t i = 0; i < b * pixels; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * cout);
  }
  const T* xv = x.values().data();
  const T* kv = kernel.values().data();
  std::vector<T> cols;
  for (std::int64_t n = 0; n < b; ++n) {
    const T* src = xv + n * h * w * cin;
    if (!pointwise) {
      im2col(src, cols);
      src = cols.data();
    }
    detail::gemm(false, false, static_cast<int>(pixels), static_cast<int>(cout), static_cast<int>(kdim), T(1), src,
                 static_cast<int>(kdim), kv, static_cast<int>(cout), T(1), out.data() + n * pixels * cout,
                 static_cast<int>(cout));
  }
  return make_result<T>(
      "conv2d", {b, oh, ow, cout}, std::move(out), {&x, &kernel, &bias}, [=](Node<T>& self) {
        const T* xv = value_of(self, 0);
        const T* kv = value_of(self, 1);
        T* gx = grad_of(self, 0);
        T* gk = grad_of(self, 1);
        T* gb = grad_of(self, 2);
        const T* g = self.grad.data();
        const int P = static_cast<int>(pixels), K = static_cast<int>(kdim), C = static_cast<int>(cout);
        std::vector<T> cols, dcols;
        for (std::int64_t n = 0; n < b; ++n) {
          const T* gn = g + n * pixels * cout;
          const T* src = xv + n * h * w * cin;
          if (gk) {
            if (!pointwise) {
              im2col(src, cols);
              src = cols.data();
            }
            detail::gemm(true, false, K, C, P, T(1), src, K, gn, C, T(1), gk, C);
          }
          if (gb) {
            for (std::int64_t i = 0; i < pixels; ++i)
              for (std::int64_t c = 0; c < cout; ++c) gb[c] += gn[i * cout + c];
          }
          if (gx) {
            T* gxn = gx + n * h * w * cin;
            if (pointwise) {
              detail::gemm(false, true, P, K, C, T(1), gn, C, kv, C, T(1), gxn, K);
              continue;
            }
            dcols.assign(static_cast<std::size_t>(pixels * kdim), T(0));
            detail::gemm(false, true, P, K, C, T(1), gn, C, kv, C, T(0), dcols.data(), K);
            for (std::int64_t oy = 0; oy < oh; ++oy)
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const T* srcg = dcols.data() + (oy * ow + ox) * kdim;
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                  const auto iy = oy * stride - py.pad_before + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (std::int64_t kx = 0; kx < kw; ++kx) {
                    const auto ix = ox * stride - px.pad_before + kx;
                    if (ix < 0 || ix >= w) continue;
                    T* dst = gxn + (iy * w + ix) * cin;
                    const T* s = srcg + (ky * kw + kx) * cin;
                    for (std::int64_t c = 0; c < cin; ++c) dst[c] += s[c];
                  }
                }
              }
          }
        }
      });
}

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x, std::int64_t window, std::int64_t stride) {
  require_rank("maxpool2d", x.shape(), 4);
  const auto b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % stride || w % stride) {
    throw DimensionError("maxpool2d: spatial dims of " + shape_str(x.shape()) + " not divisible by stride " +
                         std::to_string(stride));
  }
  const auto py = same_padding(h, window, stride);
  const auto px = same_padding(w, window, stride);
  const auto oh = py.out, ow = px.out;
  const auto xv = x.values();
  std::vector<T> out(static_cast<std::size_t>(b * oh * ow * c));
  std::vector<std::uint32_t> argmax(out.size());
  std::size_t o = 0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox)
        for (std::int64_t ch = 0; ch < c; ++ch, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          // Raster scan with strict comparison: ties go to the lowest index.
          for (std::int64_t ky = 0; ky < window; ++ky) {
            const auto iy = oy * stride - py.pad_before + ky;
            if (iy < 0 || iy >= h) continue;
            for (std::int64_t kx = 0; kx < window; ++kx) {
              const auto ix = ox * stride - px.pad_before + kx;
              if (ix < 0 || ix >= w) continue;
              const auto idx = ((n * h + iy) * w + ix) * c + ch;
              if (best_idx < 0 || xv[idx] > best) {
                best = xv[idx];
                best_idx = idx;
              }
            }
          }
          out[o] = best;
          argmax[o] = static_cast<std::uint32_t>(best_idx);
        }
  return make_result<T>("maxpool2d", {b, oh, ow, c}, std::move(out), {&x},
                        [argmax = std::move(argmax)](Node<T>& self) {
                          T* gx = grad_of(self, 0);
                          if (!gx) return;
                          for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += self.grad[i];
                        });
}

template <typename T>
BasicTensor<T> avgpool2d(const BasicTensor<T>& x, std::int64_t window, std::int64_t stride) {
  require_rank("avgpool2d", x.shape(), 4);
  const auto b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % stride || w % stride) {
    throw DimensionError("avgpool2d: spatial dims of " + shape_str(x.shape()) + " not divisible by stride " +
                         std::to_string(stride));
  }
  const auto py = same_padding(h, window, stride);
  const auto px = same_padding(w, window, stride);
  const auto oh = py.out, ow = px.out;
  auto for_window = [=](std::int64_t oy, std::int64_t ox, auto&& visit) {
    for (std::int64_t ky = 0; ky < window; ++ky) {
      const auto iy = oy * stride - py.pad_before + ky;
      if (iy < 0 || iy >= h) continue;
      for (std::int64_t kx = 0; kx < window; ++kx) {
        const auto ix = ox * stride - px.pad_before + kx;
        if (ix < 0 || ix >= w) continue;
        visit(iy * w + ix);
      }
    }
  };
  const auto xv = x.values();
  std::vector<T> out(static_cast<std::size_t>(b * oh * ow * c), T(0));
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        T* dst = out.data() + ((n * oh + oy) * ow + ox) * c;
        int count = 0;
        for_window(oy, ox, [&](std::int64_t pix) {
          ++count;
          const T* src = xv.data() + (n * h * w + pix) * c;
          for (std::int64_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        });
        for (std::int64_t ch = 0; ch < c; ++ch) dst[ch] /= static_cast<T>(count);
      }
  return make_result<T>("avgpool2d", {b, oh, ow, c}, std::move(out), {&x}, [=](Node<T>& self) {
    T* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::int64_t n = 0; n < b; ++n)
      for (std::int64_t oy = 0; oy < oh; ++oy)
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const T* g = self.grad.data() + ((n * oh + oy) * ow + ox) * c;
          int count = 0;
          for_window(oy, ox, [&](std::int64_t) { ++count; });
          const T inv = T(1) / static_cast<T>(count);
          for_window(oy, ox, [&](std::int64_t pix) {
            T* dst = gx + (n * h * w + pix) * c;
            for (std::int64_t ch = 0; ch < c; ++ch) dst[ch] += g[ch] * inv;
          });
        }
  });
}

// ---------------------------------------------------------------- losses

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels, T smoothing) {
  require_rank("cross_entropy", logits.shape(), 2);
  const auto b = logits.dim(0), classes = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  }
  for (const int y : labels) {
    if (y < 0 || y >= classes) throw RangeError("cross_entropy: label " + std::to_string(y) + " out of range");
  }
  const auto lv = logits.values();
  std::vector<T> probs(lv.size());
  const double off = static_cast<double>(smoothing) / static_cast<double>(classes);
  const double on = 1.0 - static_cast<double>(smoothing) + off;
  double loss = 0;
  for (std::int64_t r = 0; r < b; ++r) {
    const T* row = lv.data() + r * classes;
    double mx = row[0];
    for (std::int64_t j = 1; j < classes; ++j) mx = std::max<double>(mx, row[j]);
    double total = 0;
    for (std::int64_t j = 0; j < classes; ++j) total += std::exp(row[j] - mx);
    const double log_z = mx + std::log(total);
    for (std::int64_t j = 0; j < classes; ++j) {
      const double logp = row[j] - log_z;
      probs[static_cast<std::size_t>(r * classes + j)] = static_cast<T>(std::exp(logp));
      loss -= (j == labels[static_cast<std::size_t>(r)] ? on : off) * logp;
    }
  }
  loss /= static_cast<double>(b);
  std::vector<int> label_copy(labels.begin(), labels.end());
  return make_result<T>("cross_entropy", {}, {static_cast<T>(loss)}, {&logits},
                        [probs = std::move(probs), label_copy = std::move(label_copy), b, classes, on,
                         off](Node<T>& self) {
                          T* gl = grad_of(self, 0);
                          if (!gl) return;
                          const double scale = static_cast<double>(self.grad[0]) / static_cast<double>(b);
                          for (std::int64_t r = 0; r < b; ++r)
                            for (std::int64_t j = 0; j < classes; ++j) {
                              const auto idx = static_cast<std::size_t>(r * classes + j);
                              const double target = j == label_copy[static_cast<std::size_t>(r)] ? on : off;
                              gl[idx] += static_cast<T>(scale * (probs[idx] - target));
                            }
                        });
}

template <typename T>
BasicTensor<T> mse(const BasicTensor<T>& prediction, const BasicTensor<T>& target) {
  if (prediction.shape() != target.shape()) {
    throw DimensionError("mse: shapes " + shape_str(prediction.shape()) + " and " + shape_str(target.shape()) +
                         " differ");
  }
  const auto diff = sub(prediction, target);
  return mean(mul(diff, diff));
}

void set_num_threads(int threads) { openblas_set_num_threads(std::max(threads, 1)); }

// ---------------------------------------------------------------- instantiation

#define NEST_INSTANTIATE_OPS(T)                                                                              \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                   \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> tanh(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> scale_samples(const BasicTensor<T>&, std::span<const T>);                          \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                        \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> sum_axis(const BasicTensor<T>&, std::int64_t);                                     \
  template BasicTensor<T> mean_axis(const BasicTensor<T>&, std::int64_t);                                    \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                             \
  template BasicTensor<T> permute(const BasicTensor<T>&, std::span<const std::int64_t>);                     \
  template BasicTensor<T> slice(const BasicTensor<T>&, std::int64_t, std::int64_t, std::int64_t);            \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&, bool);                        \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::int64_t);                                      \
  template BasicTensor<T> layernorm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, T); \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,        \
                                 std::int64_t);                                                              \
  template BasicTensor<T> maxpool2d(const BasicTensor<T>&, std::int64_t, std::int64_t);                      \
  template BasicTensor<T> avgpool2d(const BasicTensor<T>&, std::int64_t, std::int64_t);                      \
  template BasicTensor<T> space_to_depth(const BasicTensor<T>&, std::int64_t);                               \
  template BasicTensor<T> depth_to_space(const BasicTensor<T>&, std::int64_t);                               \
  template BasicTensor<T> pixel_shuffle(const BasicTensor<T>&);                                              \
  template BasicTensor<T> upsample_nearest(const BasicTensor<T>&, std::int64_t);                             \
  template BasicTensor<T> subsample(const BasicTensor<T>&, std::int64_t);                                    \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const int>, T);                     \
  template BasicTensor<T> mse(const BasicTensor<T>&, const BasicTensor<T>&);

NEST_INSTANTIATE_OPS(float)
NEST_INSTANTIATE_OPS(double)

#undef NEST_INSTANTIATE_OPS

}  // namespace nest
