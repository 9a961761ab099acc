#pragma once

#include <functional>
#include <vector>

#include "nest/config.hpp"
#include "nest/params.hpp"
#include "nest/random.hpp"
#include "nest/tensor.hpp"

namespace nest {

std::vector<ParamSpec> generator_param_specs(const GenConfig& config);
ParamSet init_generator(const GenConfig& config, Rng& rng);

struct GenTrace {
  std::vector<int> blocks;     // block count entering each level, top first
  std::vector<Shape> shapes;   // blocked tensor leaving each level
};

// z: (b, noise_dim) -> images (b, side, side, out_channels) in [-1, 1].
Tensor generate(const GenConfig& config, const ParamSet& params, const Tensor& z, GenTrace* trace = nullptr);

// Standard normal noise (b, noise_dim).
Tensor sample_noise(const GenConfig& config, int batch, Rng& rng);

struct SmokeOptions {
  int max_steps = 2000;
  double lr = 1e-3;
  double target_ratio = 0.1;  // stop once loss <= target_ratio * initial loss
  bool stop_at_target = true;
  std::function<void(int, double)> on_step;
};

struct SmokeResult {
  std::vector<double> losses;  // loss before each update
  double initial() const { return losses.empty() ? 0.0 : losses.front(); }
  double best() const;
  double ratio() const;
};

// Fits fixed noise rows to target images with pixel MSE and AdamW. A
// non-finite loss or gradient raises NumericError.
SmokeResult reconstruction_smoke_train(const GenConfig& config, ParamSet& params, const Tensor& z,
                                       const Tensor& targets, const SmokeOptions& options = {});

}  // namespace nest
