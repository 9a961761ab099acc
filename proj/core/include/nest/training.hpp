#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "nest/config.hpp"
#include "nest/data.hpp"
#include "nest/params.hpp"
#include "nest/random.hpp"

namespace nest {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled; applied to parameters flagged for decay
};

class AdamW {
 public:
  AdamW(const ParamSet& params, AdamWOptions options);

  // One bias-corrected update from the parameters' accumulated gradients.
  // Non-finite gradients raise NumericError naming the step.
  void step(ParamSet& params, double lr);

  std::int64_t steps() const { return step_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }

 private:
  AdamWOptions options_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::int64_t step_ = 0;
};

// Linear warmup from 0 over `warmup_steps`, then cosine decay reaching 0
// at `total_steps`.
double lr_schedule(std::int64_t step, std::int64_t warmup_steps, std::int64_t total_steps, double peak);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  double eval_acc = -1;  // negative when no evaluation set was given
};

// Owns the training state: parameters, optimizer moments, step counter and
// the generator behind shuffling, augmentation and stochastic depth.
class Trainer {
 public:
  Trainer(const RunConfig& config, ParamSet params, std::int64_t train_size);

  EpochMetrics train_epoch(const Dataset& train);
  double evaluate(const Dataset& data) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const RunConfig& config() const { return config_; }
  std::int64_t step() const { return step_; }
  int epoch() const { return epoch_; }
  Rng& rng() { return rng_; }

 private:
  RunConfig config_;
  ParamSet params_;
  AdamW optimizer_;
  Rng rng_;
  std::int64_t steps_per_epoch_;
  std::int64_t warmup_steps_;
  std::int64_t total_steps_;
  std::int64_t step_ = 0;
  int epoch_ = 0;
};

// Top-1 accuracy in eval mode. An empty dataset raises ContractError.
double evaluate(const NestConfig& model, const ParamSet& params, const Dataset& data, const std::vector<double>& mean,
                const std::vector<double>& std, int batch_size = 256);

struct TrainReport {
  RunConfig config;  // resolved, including normalization statistics
  std::vector<EpochMetrics> history;
  ParamSet params;
  double train_acc = 0;  // final full pass over the train split in eval mode
  double eval_acc = -1;
};

// Fills in missing normalization statistics from `train`, initializes the
// model from the seed, and runs train.epochs epochs. Metrics are appended to
// `metrics_csv` when a path is given.
TrainReport run_training(const RunConfig& config, const Dataset& train, const Dataset* test,
                         const std::filesystem::path& metrics_csv = {},
                         const std::function<void(const EpochMetrics&)>& on_epoch = {});

struct AblationRow {
  AggregationSpec spec;
  std::string status;  // "ok" or the error category
  std::int64_t params = 0;
  double final_loss = 0;
  double train_acc = 0;
  double eval_acc = -1;
};

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<AggregationSpec>& variants,
                                      const Dataset& train, const Dataset* test);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace nest
