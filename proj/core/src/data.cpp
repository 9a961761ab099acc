#include "nest/data.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

namespace nest {

namespace {

constexpr int kCifarSide = 32;
constexpr int kCifarClasses = 10;

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void append_cifar(const std::filesystem::path& path, std::vector<float>& pixels, std::vector<int>& labels) {
  const auto bytes = read_bytes(path);
  const auto whole = bytes.size() / kCifarRecordBytes;
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw IngestionError(path.string() + ": truncated record at byte offset " +
                         std::to_string(whole * kCifarRecordBytes) + " (" +
                         std::to_string(bytes.size() % kCifarRecordBytes) + " of " +
                         std::to_string(kCifarRecordBytes) + " bytes)");
  }
  constexpr int plane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < whole; ++r) {
    const auto* record = bytes.data() + r * kCifarRecordBytes;
    if (record[0] >= kCifarClasses) {
      throw RangeError(path.string() + ": label " + std::to_string(record[0]) + " at byte offset " +
                       std::to_string(r * kCifarRecordBytes) + " is outside 0..9");
    }
    labels.push_back(record[0]);
    // Channel-planar on disk, interleaved in memory.
    for (int p = 0; p < plane; ++p)
      for (int c = 0; c < 3; ++c) pixels.push_back(static_cast<float>(record[1 + c * plane + p]) / 255.0f);
  }
}

Dataset make_cifar(std::vector<float> pixels, std::vector<int> labels, const std::string& split) {
  Dataset data;
  const auto n = static_cast<std::int64_t>(labels.size());
  data.images = Tensor::from_vector({n, kCifarSide, kCifarSide, 3}, std::move(pixels));
  data.labels = std::move(labels);
  data.split = split;
  data.num_classes = kCifarClasses;
  return data;
}

}  // namespace

Dataset load_cifar10_file(const std::filesystem::path& path, const std::string& split) {
  std::vector<float> pixels;
  std::vector<int> labels;
  append_cifar(path, pixels, labels);
  return make_cifar(std::move(pixels), std::move(labels), split);
}

Dataset load_cifar10(const std::filesystem::path& dir, const std::string& split) {
  std::vector<std::filesystem::path> files;
  if (split == "train") {
    for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else if (split == "test") {
    files.push_back(dir / "test_batch.bin");
  } else {
    throw ContractError("unknown split '" + split + "'");
  }
  std::vector<float> pixels;
  std::vector<int> labels;
  for (const auto& f : files) append_cifar(f, pixels, labels);
  return make_cifar(std::move(pixels), std::move(labels), split);
}

Dataset synth_quadrants(int count, int image_size, int num_classes, std::uint64_t seed, const std::string& split) {
  if (count <= 0 || num_classes <= 0) throw ContractError("synthetic data needs positive counts");
  if (image_size < 2 || image_size % 2 != 0) throw DimensionError("synthetic images need an even side");
  Rng rng(seed);
  const int half = image_size / 2;
  const auto pixels_per_image = static_cast<std::size_t>(image_size) * image_size * 3;
  std::vector<float> pixels(pixels_per_image * static_cast<std::size_t>(count), 0.0f);
  Dataset data;
  data.split = split;
  data.num_classes = num_classes;
  for (int i = 0; i < count; ++i) {
    const int label = i % num_classes;
    data.labels.push_back(label);
    const int q = painted_quadrant(label);
    // Beyond four classes the quadrant repeats, so the colour tells them apart.
    const int only_channel = num_classes > 4 ? (label / 4) % 3 : -1;
    float* image = pixels.data() + pixels_per_image * static_cast<std::size_t>(i);
    for (int y = (q / 2) * half; y < (q / 2 + 1) * half; ++y)
      for (int x = (q % 2) * half; x < (q % 2 + 1) * half; ++x)
        for (int c = 0; c < 3; ++c) {
          if (only_channel >= 0 && c != only_channel) continue;
          image[(static_cast<std::size_t>(y) * image_size + x) * 3 + c] = static_cast<float>(0.25 + 0.75 * rng.uniform());
        }
  }
  data.images = Tensor::from_vector({count, image_size, image_size, 3}, std::move(pixels));
  return data;
}

ChannelStats channel_stats(const Dataset& data) {
  if (data.size() == 0) throw ContractError("statistics of an empty dataset");
  const auto c = data.images.dim(3);
  std::vector<double> sum(static_cast<std::size_t>(c), 0.0), sq(static_cast<std::size_t>(c), 0.0);
  const auto values = data.images.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum[i % c] += values[i];
    sq[i % c] += static_cast<double>(values[i]) * values[i];
  }
  const double count = static_cast<double>(values.size() / c);
  ChannelStats stats;
  for (std::int64_t k = 0; k < c; ++k) {
    const double mean = sum[k] / count;
    const double var = std::max(0.0, sq[k] / count - mean * mean);
    stats.mean.push_back(mean);
    // A constant channel is only centred.
    stats.std.push_back(var > 1e-12 ? std::sqrt(var) : 1.0);
  }
  return stats;
}

Tensor normalize(const Tensor& images, const std::vector<double>& mean, const std::vector<double>& std) {
  const auto c = images.dim(-1);
  if (static_cast<std::int64_t>(mean.size()) != c || static_cast<std::int64_t>(std.size()) != c) {
    throw DimensionError("normalization statistics do not match " + std::to_string(c) + " channels");
  }
  std::vector<float> out(images.values().begin(), images.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>((out[i] - mean[i % c]) / std[i % c]);
  }
  return Tensor::from_vector(images.shape(), std::move(out));
}

Batch make_batch(const Dataset& data, std::span<const std::int64_t> indices, const BatchOptions& options) {
  if (options.augment && !options.rng) throw ContractError("augmentation needs a random generator");
  const auto h = data.images.dim(1), w = data.images.dim(2), c = data.images.dim(3);
  const auto per_image = static_cast<std::size_t>(h * w * c);
  const auto source = data.images.values();
  std::vector<float> pixels(per_image * indices.size(), 0.0f);
  Batch batch;
  const std::int64_t pad = std::max<std::int64_t>(1, h / 8);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto index = indices[b];
    if (index < 0 || index >= data.size()) throw RangeError("sample index " + std::to_string(index) + " out of range");
    batch.labels.push_back(data.labels[static_cast<std::size_t>(index)]);
    const float* in = source.data() + per_image * static_cast<std::size_t>(index);
    float* out = pixels.data() + per_image * b;
    if (!options.augment) {
      std::copy(in, in + per_image, out);
      continue;
    }
    // Zero-padded random crop plus horizontal flip.
    const bool flip = options.rng->bernoulli(0.5);
    const auto dy = static_cast<std::int64_t>(options.rng->uniform_int(2 * pad + 1)) - pad;
    const auto dx = static_cast<std::int64_t>(options.rng->uniform_int(2 * pad + 1)) - pad;
    for (std::int64_t y = 0; y < h; ++y) {
      const auto sy = y + dy;
      if (sy < 0 || sy >= h) continue;
      for (std::int64_t x = 0; x < w; ++x) {
        auto sx = x + dx;
        if (sx < 0 || sx >= w) continue;
        if (flip) sx = w - 1 - sx;
        std::copy_n(in + (sy * w + sx) * c, c, out + (y * w + x) * c);
      }
    }
  }
  batch.images = Tensor::from_vector({static_cast<std::int64_t>(indices.size()), h, w, c}, std::move(pixels));
  if (!options.mean.empty()) batch.images = normalize(batch.images, options.mean, options.std);
  return batch;
}

Splits load_splits(const DataConfig& data, const NestConfig& model, std::uint64_t seed) {
  if (data.source != "synth") return {load_cifar10(data.source, "train"), load_cifar10(data.source, "test")};
  return {synth_quadrants(data.synth_train, model.image_size, model.num_classes, 2 * seed + 1, "train"),
          synth_quadrants(data.synth_test, model.image_size, model.num_classes, 2 * seed + 2, "test")};
}

}  // namespace nest
