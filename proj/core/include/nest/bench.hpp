#pragma once

#include "nest/config.hpp"
#include "nest/params.hpp"

namespace nest {

struct BenchResult {
  double images_per_second = 0;
  double median_seconds = 0;  // per batch
  int batch = 0;
  int iters = 0;
};

// Inference throughput on random inputs: `warmup` untimed batches, then the
// median over `iters` timed ones.
BenchResult bench_throughput(const NestConfig& config, const ParamSet& params, int batch, int iters, int warmup = 1);

}  // namespace nest
