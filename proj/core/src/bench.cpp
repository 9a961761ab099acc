#include "nest/bench.hpp"

#include <algorithm>
#include <chrono>

#include "nest/model.hpp"

namespace nest {

BenchResult bench_throughput(const NestConfig& config, const ParamSet& params, int batch, int iters, int warmup) {
  if (batch <= 0 || iters <= 0 || warmup < 0) throw ContractError("benchmark needs a positive batch and iteration count");
  Rng rng(0);
  std::vector<float> pixels(static_cast<std::size_t>(batch) * config.image_size * config.image_size * config.in_channels);
  for (auto& v : pixels) v = static_cast<float>(rng.normal());
  const auto images =
      Tensor::from_vector({batch, config.image_size, config.image_size, config.in_channels}, std::move(pixels));
  NoGradGuard no_grad;
  for (int i = 0; i < warmup; ++i) forward(config, params, images);
  std::vector<double> seconds;
  for (int i = 0; i < iters; ++i) {
    const auto start = std::chrono::steady_clock::now();
    forward(config, params, images);
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(seconds.begin(), seconds.end());
  const double median = seconds.size() % 2 ? seconds[seconds.size() / 2]
                                            : 0.5 * (seconds[seconds.size() / 2 - 1] + seconds[seconds.size() / 2]);
  return {median > 0 ? batch / median : 0.0, median, batch, iters};
}

}  // namespace nest
