#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace nest {

// Seeded generator shared by initialization, stochastic depth, data
// shuffling and augmentation. State is serializable for checkpoints.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t uniform_int(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }
  // Normal(0, std) resampled until it lies within two standard deviations.
  double trunc_normal(double std);

  std::mt19937_64& engine() { return engine_; }
  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace nest
