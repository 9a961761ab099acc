#include "nest/generator.hpp"

#include <algorithm>
#include <cmath>

#include "nest/aggregation.hpp"
#include "nest/model.hpp"
#include "nest/ops.hpp"
#include "nest/training.hpp"

namespace nest {

namespace {

std::string level_name(int level) { return "level" + std::to_string(level); }

}  // namespace

std::vector<ParamSpec> generator_param_specs(const GenConfig& config) {
  config.validate();
  std::vector<ParamSpec> specs;
  const int n = config.seq_len();
  if (config.latent_dim > 0) {
    specs.push_back({"latent/kernel", {config.latent_dim, n * config.dims[0]}, Init::kTruncNormal, true});
    specs.push_back({"latent/bias", {n * config.dims[0]}, Init::kZeros, false});
  }
  int blocks = 1;
  for (int level = 0; level < config.levels(); ++level) {
    const auto name = level_name(level);
    const int d = config.dims[level];
    specs.push_back({name + "/pos_embed", {blocks, n, d}, Init::kTruncNormal, false});
    for (int j = 0; j < config.layers[level]; ++j) {
      append_layer_specs(specs, name + "/layer" + std::to_string(j), d, config.ffn_ratio, config.qkv_bias);
    }
    if (level + 1 < config.levels()) append_deaggregation_specs(specs, name + "/deaggregate", config.deaggregation, d);
    blocks *= 4;
  }
  const int last = config.dims.back();
  specs.push_back({"out/norm/scale", {last}, Init::kOnes, false});
  specs.push_back({"out/norm/bias", {last}, Init::kZeros, false});
  specs.push_back({"out/kernel", {last, config.out_channels}, Init::kTruncNormal, true});
  specs.push_back({"out/bias", {config.out_channels}, Init::kZeros, false});
  return specs;
}

ParamSet init_generator(const GenConfig& config, Rng& rng) { return init_params(generator_param_specs(config), rng); }

Tensor generate(const GenConfig& config, const ParamSet& p, const Tensor& z, GenTrace* trace) {
  config.validate();
  if (z.rank() != 2 || z.dim(1) != config.noise_dim()) {
    throw DimensionError("noise " + shape_str(z.shape()) + " does not match width " + std::to_string(config.noise_dim()));
  }
  const auto b = z.dim(0);
  const std::int64_t n = config.seq_len();
  auto x = config.latent_dim > 0 ? linear(z, p["latent/kernel"], p["latent/bias"]) : z;
  x = reshape(x, {b, 1, n, config.dims[0]});
  const LayerOptions layer_options{};
  for (int level = 0; level < config.levels(); ++level) {
    const auto name = level_name(level);
    if (trace) trace->blocks.push_back(static_cast<int>(x.dim(1)));
    x = add_positional(x, p[name + "/pos_embed"]);
    for (int j = 0; j < config.layers[level]; ++j) {
      x = transformer_layer(x, config.heads[level], p, name + "/layer" + std::to_string(j), layer_options);
    }
    if (trace) trace->shapes.push_back(x.shape());
    if (level + 1 < config.levels()) x = de_aggregate(x, config.deaggregation, p, name + "/deaggregate");
  }
  const auto plane = layernorm(unblockify(x), p["out/norm/scale"], p["out/norm/bias"]);
  return tanh(linear(plane, p["out/kernel"], p["out/bias"]));
}

Tensor sample_noise(const GenConfig& config, int batch, Rng& rng) {
  if (batch <= 0) throw ContractError("noise batch must be positive");
  std::vector<float> values(static_cast<std::size_t>(batch) * config.noise_dim());
  for (auto& v : values) v = static_cast<float>(rng.normal());
  return Tensor::from_vector({batch, config.noise_dim()}, std::move(values));
}

double SmokeResult::best() const {
  return losses.empty() ? 0.0 : *std::min_element(losses.begin(), losses.end());
}

double SmokeResult::ratio() const {
  const double start = initial();
  return start > 0 ? best() / start : 0.0;
}

SmokeResult reconstruction_smoke_train(const GenConfig& config, ParamSet& params, const Tensor& z,
                                       const Tensor& targets, const SmokeOptions& options) {
  if (options.max_steps <= 0) throw ContractError("smoke training needs at least one step");
  AdamW optimizer(params, AdamWOptions{});
  const Tensor target = targets.detach();
  SmokeResult result;
  for (int step = 0; step < options.max_steps; ++step) {
    params.zero_grad();
    const auto loss = mse(generate(config, params, z), target);
    const double value = loss.item();
    result.losses.push_back(value);
    if (options.on_step) options.on_step(step, value);
    if (options.stop_at_target && value <= options.target_ratio * result.initial()) break;
    loss.backward();
    optimizer.step(params, options.lr);
  }
  return result;
}

}  // namespace nest
