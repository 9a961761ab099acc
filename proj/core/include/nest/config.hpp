#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nest {

enum class AggregationKind {
  kConvLnMaxpool,
  kConvLnAvgpool,
  kConvStride2,
  kMaxpoolOnly,
  kPatchMerge,
  kSubsample2x2,
  kConv4x1,  // reserved id; not implemented
};

enum class Plane { kImage, kBlock };

struct AggregationSpec {
  AggregationKind kind = AggregationKind::kConvLnMaxpool;
  Plane plane = Plane::kImage;
  bool operator==(const AggregationSpec&) const = default;
};

std::string_view to_string(AggregationKind kind);
std::string_view to_string(Plane plane);
std::string to_string(const AggregationSpec& spec);
// Accepts "<id>" or "<id>@<plane>"; plane defaults to image.
AggregationSpec parse_aggregation(std::string_view text);
// Every id in the registry, default first.
std::vector<AggregationKind> aggregation_kinds();

enum class DeaggregationKind { kPixelShuffle, kConvPixelShuffle, kNearestConv };

std::string_view to_string(DeaggregationKind kind);
DeaggregationKind parse_deaggregation(std::string_view text);

// Classifier architecture. Per-level vectors run bottom (first processed,
// most blocks) to top (one block).
struct NestConfig {
  std::string name = "custom";
  int image_size = 32;
  int in_channels = 3;
  int patch_size = 1;
  int depth = 4;
  std::vector<int> dims{192, 192, 192, 192};
  std::vector<int> heads{3, 3, 3, 3};
  std::vector<int> layers{3, 3, 3, 3};
  int ffn_ratio = 4;
  int num_classes = 10;
  AggregationSpec aggregation;
  double stochastic_depth = 0.0;
  bool qkv_bias = true;

  // Throws ConfigError or HierarchyError.
  void validate() const;
  int grid() const { return image_size / patch_size; }
  int blocks_per_side(int level) const { return 1 << (depth - 1 - level); }
  int num_blocks(int level) const { return blocks_per_side(level) * blocks_per_side(level); }
  int block_side() const { return grid() >> (depth - 1); }
  int seq_len() const { return block_side() * block_side(); }
  int plane_side(int level) const { return block_side() * blocks_per_side(level); }

  bool operator==(const NestConfig&) const = default;
};

// Transposed decoder. Per-level vectors run top (one block, first
// processed) to bottom.
struct GenConfig {
  std::string name = "gen";
  int latent_dim = 128;  // 0 feeds z straight in as an (n, d) sequence
  int block_side = 8;
  int out_channels = 3;
  std::vector<int> dims{1024, 256, 64, 16};
  std::vector<int> heads{4, 4, 4, 4};
  std::vector<int> layers{5, 3, 3, 2};
  int ffn_ratio = 4;
  DeaggregationKind deaggregation = DeaggregationKind::kPixelShuffle;
  bool qkv_bias = true;

  void validate() const;
  int levels() const { return static_cast<int>(dims.size()); }
  int seq_len() const { return block_side * block_side; }
  int noise_dim() const { return latent_dim > 0 ? latent_dim : seq_len() * dims.front(); }
  int image_side() const { return block_side << (levels() - 1); }

  bool operator==(const GenConfig&) const = default;
};

struct TrainConfig {
  double base_lr = 2.5e-6;  // scaled by batch_size for the peak rate
  int batch_size = 128;
  double weight_decay = 0.05;
  double warmup_epochs = 5;
  int epochs = 300;
  double label_smoothing = 0.1;
  std::uint64_t seed = 0;
  bool augment = true;

  double peak_lr() const { return base_lr * batch_size; }
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct DataConfig {
  std::string source = "synth";  // "synth" or a CIFAR-10 binary directory
  int synth_train = 64;
  int synth_test = 64;
  // Per-channel statistics; empty until computed from the train split.
  std::vector<double> mean;
  std::vector<double> std;

  bool operator==(const DataConfig&) const = default;
};

struct InterpretConfig {
  bool positive_gradient = true;
  bool operator==(const InterpretConfig&) const = default;
};

struct RunConfig {
  std::string kind = "classifier";  // or "generator"
  NestConfig model;
  GenConfig generator;
  TrainConfig train;
  DataConfig data;
  InterpretConfig interpret;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// INI-like text: `[section]` headers, `key = value` lines, `#` comments.
// Values are numbers, booleans, "quoted strings" or [comma, lists].
// Unknown sections and keys are rejected.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
std::string to_text(const RunConfig& config);
void save_config(const std::filesystem::path& path, const RunConfig& config);
// Applies one `section.key` override given as value text.
void set_option(RunConfig& config, std::string_view dotted_key, std::string_view value);

std::vector<std::string> preset_names();
std::string preset_text(std::string_view name);
RunConfig preset(std::string_view name);

}  // namespace nest
