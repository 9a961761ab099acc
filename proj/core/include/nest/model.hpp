#pragma once

#include <string>
#include <vector>

#include "nest/aggregation.hpp"
#include "nest/config.hpp"
#include "nest/params.hpp"
#include "nest/random.hpp"
#include "nest/tensor.hpp"

namespace nest {

// Stochastic depth: in training each sample's residual branch is dropped
// with probability drop_prob; at inference the branch is scaled by
// (1 - drop_prob), its expected contribution during training.
struct LayerOptions {
  bool training = false;
  double drop_prob = 0.0;
  Rng* rng = nullptr;
};

// Names of one transformer layer's parameters under `prefix`.
void append_layer_specs(std::vector<ParamSpec>& specs, const std::string& prefix, int d, int ffn_ratio,
                        bool qkv_bias);

// Multi-head self-attention applied independently inside every block.
// x: (b, #blocks, n, d).
template <typename T>
BasicTensor<T> msa_nest(const BasicTensor<T>& x, int heads, const BasicParamSet<T>& params, const std::string& prefix);

// Pre-norm layer: x + MSA(LN(x)), then + FFN(LN(.)).
template <typename T>
BasicTensor<T> transformer_layer(const BasicTensor<T>& x, int heads, const BasicParamSet<T>& params,
                                 const std::string& prefix, const LayerOptions& options = {});

// x: (b, #blocks, n, d) plus pe: (#blocks, n, d).
template <typename T>
BasicTensor<T> add_positional(const BasicTensor<T>& x, const BasicTensor<T>& pe);

std::vector<ParamSpec> nest_param_specs(const NestConfig& config);
ParamSet init_nest(const NestConfig& config, Rng& rng);

// (b, H, W, c) -> (b, H/S, W/S, d_0) by a linear map of each S x S patch.
template <typename T>
BasicTensor<T> patch_embed(const BasicTensor<T>& images, const NestConfig& config, const BasicParamSet<T>& params);

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // required when training with stochastic depth
};

template <typename T>
struct ForwardResult {
  BasicTensor<T> logits;                   // (b, classes)
  std::vector<BasicTensor<T>> planes;      // per level, transformer output unblocked to (b, h, w, d)
  std::vector<BasicTensor<T>> aggregated;  // per aggregation step, blocked output
  BasicTensor<T> features;                 // top plane after the final norm, (b, h, w, d)
  std::vector<int> blocks;                 // block count per level
};

template <typename T>
ForwardResult<T> forward(const NestConfig& config, const BasicParamSet<T>& params, const BasicTensor<T>& images,
                         const ForwardOptions& options = {});

}  // namespace nest
