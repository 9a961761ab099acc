#include "nest/model.hpp"

#include <cmath>

#include "nest/ops.hpp"

namespace nest {

namespace {

std::string level_name(int level) { return "level" + std::to_string(level); }

template <typename T>
BasicTensor<T> optional(const BasicParamSet<T>& p, const std::string& name) {
  return p.contains(name) ? p[name] : BasicTensor<T>();
}

// Adds a residual branch, applying stochastic depth.
template <typename T>
BasicTensor<T> residual(const BasicTensor<T>& x, const BasicTensor<T>& branch, const LayerOptions& options) {
  const double p = options.drop_prob;
  if (p <= 0.0) return add(x, branch);
  if (!options.training) return add(x, scale(branch, static_cast<T>(1.0 - p)));
  if (!options.rng) throw ContractError("stochastic depth in training needs a random generator");
  const auto batch = x.dim(0);
  std::vector<T> keep(static_cast<std::size_t>(batch));
  bool any_kept = false, all_kept = true;
  for (auto& k : keep) {
    k = options.rng->bernoulli(p) ? T(0) : T(1);
    any_kept = any_kept || k != T(0);
    all_kept = all_kept && k != T(0);
  }
  if (!any_kept) return x;
  if (all_kept) return add(x, branch);
  return add(x, scale_samples(branch, std::span<const T>(keep)));
}

}  // namespace

void append_layer_specs(std::vector<ParamSpec>& specs, const std::string& prefix, int d, int ffn_ratio,
                        bool qkv_bias) {
  const int hidden = d * ffn_ratio;
  specs.push_back({prefix + "/ln1/scale", {d}, Init::kOnes, false});
  specs.push_back({prefix + "/ln1/bias", {d}, Init::kZeros, false});
  specs.push_back({prefix + "/attn/qkv/kernel", {d, 3 * d}, Init::kTruncNormal, true});
  if (qkv_bias) specs.push_back({prefix + "/attn/qkv/bias", {3 * d}, Init::kZeros, false});
  specs.push_back({prefix + "/attn/out/kernel", {d, d}, Init::kTruncNormal, true});
  specs.push_back({prefix + "/attn/out/bias", {d}, Init::kZeros, false});
  specs.push_back({prefix + "/ln2/scale", {d}, Init::kOnes, false});
  specs.push_back({prefix + "/ln2/bias", {d}, Init::kZeros, false});
  specs.push_back({prefix + "/mlp/fc1/kernel", {d, hidden}, Init::kTruncNormal, true});
  specs.push_back({prefix + "/mlp/fc1/bias", {hidden}, Init::kZeros, false});
  specs.push_back({prefix + "/mlp/fc2/kernel", {hidden, d}, Init::kTruncNormal, true});
  specs.push_back({prefix + "/mlp/fc2/bias", {d}, Init::kZeros, false});
}

template <typename T>
BasicTensor<T> msa_nest(const BasicTensor<T>& x, int heads, const BasicParamSet<T>& p, const std::string& prefix) {
  if (x.rank() != 4) throw DimensionError("msa_nest expects (b, blocks, n, d), got " + shape_str(x.shape()));
  const auto b = x.dim(0), blocks = x.dim(1), n = x.dim(2), d = x.dim(3);
  if (heads <= 0 || d % heads != 0) {
    throw ConfigError("width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  const std::int64_t h = heads, dh = d / heads, rows = b * blocks;
  const auto qkv = linear(x, p[prefix + "/qkv/kernel"], optional(p, prefix + "/qkv/bias"));
  // (rows, n, 3, h, dh) -> (3, rows, h, n, dh)
  const auto split = permute(reshape(qkv, {rows, n, 3, h, dh}), {2, 0, 3, 1, 4});
  auto part = [&](std::int64_t i) { return reshape(slice(split, 0, i, 1), {rows, h, n, dh}); };
  const auto q = part(0), k = part(1), v = part(2);
  const auto scores = scale(matmul(q, k, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  const auto mixed = matmul(softmax(scores, -1), v);
  const auto merged = reshape(permute(mixed, {0, 2, 1, 3}), {b, blocks, n, d});
  return linear(merged, p[prefix + "/out/kernel"], p[prefix + "/out/bias"]);
}

template <typename T>
BasicTensor<T> transformer_layer(const BasicTensor<T>& x, int heads, const BasicParamSet<T>& p,
                                 const std::string& prefix, const LayerOptions& options) {
  const auto h1 = layernorm(x, p[prefix + "/ln1/scale"], p[prefix + "/ln1/bias"]);
  const auto y = residual(x, msa_nest(h1, heads, p, prefix + "/attn"), options);
  const auto h2 = layernorm(y, p[prefix + "/ln2/scale"], p[prefix + "/ln2/bias"]);
  const auto hidden = relu(linear(h2, p[prefix + "/mlp/fc1/kernel"], p[prefix + "/mlp/fc1/bias"]));
  return residual(y, linear(hidden, p[prefix + "/mlp/fc2/kernel"], p[prefix + "/mlp/fc2/bias"]), options);
}

template <typename T>
BasicTensor<T> add_positional(const BasicTensor<T>& x, const BasicTensor<T>& pe) {
  if (x.rank() != 4 || pe.rank() != 3 || pe.dim(0) != x.dim(1) || pe.dim(1) != x.dim(2) || pe.dim(2) != x.dim(3)) {
    throw DimensionError("positional table " + shape_str(pe.shape()) + " does not match blocks " +
                         shape_str(x.shape()));
  }
  return add(x, pe);
}

std::vector<ParamSpec> nest_param_specs(const NestConfig& config) {
  config.validate();
  std::vector<ParamSpec> specs;
  const int patch_in = config.patch_size * config.patch_size * config.in_channels;
  specs.push_back({"patch_embed/kernel", {patch_in, config.dims[0]}, Init::kTruncNormal, true});
  specs.push_back({"patch_embed/bias", {config.dims[0]}, Init::kZeros, false});
  for (int level = 0; level < config.depth; ++level) {
    const auto name = level_name(level);
    const int d = config.dims[level];
    specs.push_back({name + "/pos_embed", {config.num_blocks(level), config.seq_len(), d}, Init::kTruncNormal, false});
    for (int j = 0; j < config.layers[level]; ++j) {
      append_layer_specs(specs, name + "/layer" + std::to_string(j), d, config.ffn_ratio, config.qkv_bias);
    }
    if (level + 1 < config.depth) {
      append_aggregation_specs(specs, name + "/aggregate", config.aggregation.kind, d, config.dims[level + 1]);
    }
  }
  const int top = config.dims.back();
  specs.push_back({"head/norm/scale", {top}, Init::kOnes, false});
  specs.push_back({"head/norm/bias", {top}, Init::kZeros, false});
  specs.push_back({"head/kernel", {top, config.num_classes}, Init::kTruncNormal, true});
  specs.push_back({"head/bias", {config.num_classes}, Init::kZeros, false});
  return specs;
}

ParamSet init_nest(const NestConfig& config, Rng& rng) { return init_params(nest_param_specs(config), rng); }

template <typename T>
BasicTensor<T> patch_embed(const BasicTensor<T>& images, const NestConfig& config, const BasicParamSet<T>& p) {
  if (images.rank() != 4 || images.dim(1) != config.image_size || images.dim(2) != config.image_size ||
      images.dim(3) != config.in_channels) {
    throw ConfigError("input " + shape_str(images.shape()) + " does not match the configured " +
                      std::to_string(config.image_size) + "x" + std::to_string(config.image_size) + "x" +
                      std::to_string(config.in_channels) + " images");
  }
  return linear(space_to_depth(images, config.patch_size), p["patch_embed/kernel"], p["patch_embed/bias"]);
}

template <typename T>
ForwardResult<T> forward(const NestConfig& config, const BasicParamSet<T>& p, const BasicTensor<T>& images,
                         const ForwardOptions& options) {
  config.validate();
  ForwardResult<T> out;
  const int side = config.block_side();
  LayerOptions layer_options{options.training, config.stochastic_depth, options.rng};

  auto x = blockify(patch_embed(images, config, p), side);
  BasicTensor<T> plane;
  for (int level = 0; level < config.depth; ++level) {
    const auto name = level_name(level);
    out.blocks.push_back(static_cast<int>(x.dim(1)));
    x = add_positional(x, p[name + "/pos_embed"]);
    for (int j = 0; j < config.layers[level]; ++j) {
      x = transformer_layer(x, config.heads[level], p, name + "/layer" + std::to_string(j), layer_options);
    }
    // Everything downstream consumes the unblocked plane so that its
    // gradient is the gradient of the logits.
    plane = unblockify(x);
    out.planes.push_back(plane);
    if (level + 1 < config.depth) {
      x = aggregate_from_plane(plane, config.aggregation, p, name + "/aggregate", side);
      out.aggregated.push_back(x);
    }
  }
  const auto b = plane.dim(0), d = plane.dim(3);
  out.features = layernorm(plane, p["head/norm/scale"], p["head/norm/bias"]);
  const auto pooled = mean_axis(reshape(out.features, {b, -1, d}), 1);
  out.logits = linear(pooled, p["head/kernel"], p["head/bias"]);
  return out;
}

#define NEST_INSTANTIATE_MODEL(T)                                                                              \
  template BasicTensor<T> msa_nest(const BasicTensor<T>&, int, const BasicParamSet<T>&, const std::string&);   \
  template BasicTensor<T> transformer_layer(const BasicTensor<T>&, int, const BasicParamSet<T>&,               \
                                            const std::string&, const LayerOptions&);                          \
  template BasicTensor<T> add_positional(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> patch_embed(const BasicTensor<T>&, const NestConfig&, const BasicParamSet<T>&);      \
  template ForwardResult<T> forward(const NestConfig&, const BasicParamSet<T>&, const BasicTensor<T>&,         \
                                    const ForwardOptions&);

NEST_INSTANTIATE_MODEL(float)
NEST_INSTANTIATE_MODEL(double)

}  // namespace nest
