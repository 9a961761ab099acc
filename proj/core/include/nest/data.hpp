#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nest/config.hpp"
#include "nest/random.hpp"
#include "nest/tensor.hpp"

namespace nest {

// Images (N, H, W, 3) with values in [0, 1]; normalization happens when
// batches are assembled.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::string split;
  int num_classes = 10;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
};

inline constexpr std::size_t kCifarRecordBytes = 3073;

// One CIFAR-10 binary file: records of a label byte followed by 1024 red,
// 1024 green and 1024 blue bytes.
Dataset load_cifar10_file(const std::filesystem::path& path, const std::string& split);
// `split` is "train" (data_batch_1..5.bin) or "test" (test_batch.bin).
Dataset load_cifar10(const std::filesystem::path& dir, const std::string& split);

// Class k paints quadrant k mod 4 (raster order) with random intensities;
// everything else stays zero. Labels are balanced.
Dataset synth_quadrants(int count, int image_size, int num_classes, std::uint64_t seed, const std::string& split);
inline int painted_quadrant(int label) { return label % 4; }

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
};
ChannelStats channel_stats(const Dataset& data);

Tensor normalize(const Tensor& images, const std::vector<double>& mean, const std::vector<double>& std);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

struct BatchOptions {
  std::vector<double> mean;  // empty: no normalization
  std::vector<double> std;
  bool augment = false;  // random horizontal flip and zero-padded random crop
  Rng* rng = nullptr;
};

Batch make_batch(const Dataset& data, std::span<const std::int64_t> indices, const BatchOptions& options = {});

struct Splits {
  Dataset train;
  Dataset test;
};

// Synthetic splits when `data.source` is "synth" (seeded from `seed`),
// otherwise the CIFAR-10 binaries in that directory.
Splits load_splits(const DataConfig& data, const NestConfig& model, std::uint64_t seed);

}  // namespace nest
