#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nest/tensor.hpp"

// Differentiable tensor operations. Spatial tensors are channel-last
// (batch, height, width, channels). Binary elementwise ops accept a
// right-hand side whose shape equals a trailing suffix of the left-hand
// shape; that operand is broadcast over the leading dims. No other
// broadcasting is performed.
namespace nest {

template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <typename T> BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> tanh(const BasicTensor<T>& x);

// Multiplies every slice x[i, ...] by factors[i]; factors are constants.
template <typename T>
BasicTensor<T> scale_samples(const BasicTensor<T>& x, std::span<const T> factors);

template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> sum_axis(const BasicTensor<T>& x, std::int64_t axis);
template <typename T> BasicTensor<T> mean_axis(const BasicTensor<T>& x, std::int64_t axis);

// One extent may be -1 and is inferred.
template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
template <typename T> BasicTensor<T> permute(const BasicTensor<T>& x, std::span<const std::int64_t> perm);
template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, std::initializer_list<std::int64_t> perm) {
  return permute(x, std::span<const std::int64_t>(perm.begin(), perm.size()));
}
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::int64_t axis, std::int64_t start, std::int64_t length);

// a: (..., m, k), b: (..., k, p) or (..., p, k) when transpose_b.
// Batch dims must match, or one operand must be a plain matrix.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_b = false);

// x: (..., in), weight: (in, out), bias: (out) or undefined.
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& x, std::int64_t axis);

// Normalizes over the last axis.
template <typename T>
BasicTensor<T> layernorm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                         T eps = T(1e-6));

// SAME padding (total pad split floor/ceil, before/after) with zeros.
// x: (b, h, w, c_in), kernel: (kh, kw, c_in, c_out), bias: (c_out) or undefined.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      std::int64_t stride = 1);

// SAME-style windows; padded positions are excluded from the max and from
// the average's divisor. Spatial extents must be divisible by the stride.
template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x, std::int64_t window = 3, std::int64_t stride = 2);
template <typename T>
BasicTensor<T> avgpool2d(const BasicTensor<T>& x, std::int64_t window, std::int64_t stride);

// (b, h, w, c) -> (b, h/f, w/f, f*f*c); output channel (dy*f + dx)*c + ch.
template <typename T> BasicTensor<T> space_to_depth(const BasicTensor<T>& x, std::int64_t factor);
template <typename T> BasicTensor<T> depth_to_space(const BasicTensor<T>& x, std::int64_t factor);
// (b, h, w, 4c) -> (b, 2h, 2w, c).
template <typename T> BasicTensor<T> pixel_shuffle(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, std::int64_t factor);
// Keeps element (f*i, f*j) of every f x f cell.
template <typename T> BasicTensor<T> subsample(const BasicTensor<T>& x, std::int64_t factor);

// Mean cross-entropy of logits (b, classes) against integer labels with
// uniform label smoothing.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels, T smoothing = T(0));

template <typename T>
BasicTensor<T> mse(const BasicTensor<T>& prediction, const BasicTensor<T>& target);

// Caps the worker threads of the BLAS backend.
void set_num_threads(int threads);

}  // namespace nest
