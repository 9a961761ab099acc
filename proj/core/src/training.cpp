#include "nest/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "nest/model.hpp"
#include "nest/ops.hpp"

namespace nest {

namespace {

// Keeps the shuffling/augmentation stream apart from the initialization stream.
constexpr std::uint64_t kTrainStream = 0x9E3779B97F4A7C15ULL;

int argmax_row(std::span<const float> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::int64_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
  const auto classes = logits.dim(1);
  const auto values = logits.values();
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    correct += argmax_row(values.subspan(i * classes, static_cast<std::size_t>(classes))) == labels[i];
  }
  return correct;
}

std::string csv_number(double v) {
  std::ostringstream out;
  out.precision(8);
  out << v;
  return out.str();
}

}  // namespace

AdamW::AdamW(const ParamSet& params, AdamWOptions options) : options_(options) {
  for (const auto& e : params.entries()) {
    m_.emplace_back(e.tensor.values().size(), 0.0f);
    v_.emplace_back(e.tensor.values().size(), 0.0f);
  }
}

void AdamW::step(ParamSet& params, double lr) {
  auto& entries = params.entries();
  if (entries.size() != m_.size()) throw ContractError("optimizer state does not match the parameter set");
  const auto t = step_ + 1;
  // Validate everything first so a failed step leaves the state untouched.
  for (const auto& e : entries) {
    for (float g : e.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient for " + e.name + " at step " + std::to_string(t));
      }
    }
  }
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    auto w = e.tensor.mutable_values();
    const auto g = e.tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    const double shrink = e.decay ? 1.0 - lr * options_.weight_decay : 1.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      m[k] = static_cast<float>(b1 * m[k] + (1 - b1) * gk);
      v[k] = static_cast<float>(b2 * v[k] + (1 - b2) * gk * gk);
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + options_.eps);
      w[k] = static_cast<float>(w[k] * shrink - lr * update);
    }
  }
  step_ = t;
}

double lr_schedule(std::int64_t step, std::int64_t warmup_steps, std::int64_t total_steps, double peak) {
  if (step < 0 || total_steps <= 0) throw ContractError("schedule needs a non-negative step and a positive horizon");
  if (step < warmup_steps) return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (step >= total_steps) return 0.0;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
}

Trainer::Trainer(const RunConfig& config, ParamSet params, std::int64_t train_size)
    : config_(config),
      params_(std::move(params)),
      optimizer_(params_, AdamWOptions{.weight_decay = config.train.weight_decay}),
      rng_(config.train.seed ^ kTrainStream) {
  config_.validate();
  if (train_size <= 0) throw ContractError("training needs a non-empty dataset");
  const auto batch = config_.train.batch_size;
  steps_per_epoch_ = (train_size + batch - 1) / batch;
  total_steps_ = steps_per_epoch_ * config_.train.epochs;
  warmup_steps_ = std::min<std::int64_t>(
      total_steps_, std::llround(config_.train.warmup_epochs * static_cast<double>(steps_per_epoch_)));
}

EpochMetrics Trainer::train_epoch(const Dataset& train) {
  const auto n = train.size();
  if (n <= 0) throw ContractError("cannot train on an empty dataset");
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_.engine());

  const auto& tc = config_.train;
  BatchOptions batch_options{config_.data.mean, config_.data.std, tc.augment, &rng_};
  EpochMetrics metrics;
  metrics.epoch = epoch_ + 1;
  double loss_total = 0;
  std::int64_t correct = 0;
  for (std::int64_t start = 0; start < n; start += tc.batch_size) {
    const auto count = std::min<std::int64_t>(tc.batch_size, n - start);
    const auto batch = make_batch(train, std::span(order).subspan(start, count), batch_options);
    const double lr = lr_schedule(step_, warmup_steps_, total_steps_, tc.peak_lr());
    params_.zero_grad();
    try {
      const auto result = forward(config_.model, params_, batch.images, {.training = true, .rng = &rng_});
      const auto loss = cross_entropy(result.logits, batch.labels, static_cast<float>(tc.label_smoothing));
      loss.backward();
      loss_total += loss.item() * static_cast<double>(count);
      correct += count_correct(result.logits, batch.labels);
    } catch (const NumericError& e) {
      throw NumericError("training step " + std::to_string(step_ + 1) + ": " + e.what());
    }
    optimizer_.step(params_, lr);
    metrics.lr = lr;
    ++step_;
  }
  ++epoch_;
  metrics.train_loss = loss_total / static_cast<double>(n);
  metrics.train_acc = static_cast<double>(correct) / static_cast<double>(n);
  return metrics;
}

double Trainer::evaluate(const Dataset& data) const {
  return nest::evaluate(config_.model, params_, data, config_.data.mean, config_.data.std);
}

double evaluate(const NestConfig& model, const ParamSet& params, const Dataset& data, const std::vector<double>& mean,
                const std::vector<double>& std, int batch_size) {
  if (data.size() == 0) throw ContractError("cannot evaluate on an empty dataset");
  NoGradGuard no_grad;
  const BatchOptions options{mean, std, false, nullptr};
  std::int64_t correct = 0;
  std::vector<std::int64_t> indices;
  for (std::int64_t start = 0; start < data.size(); start += batch_size) {
    const auto count = std::min<std::int64_t>(batch_size, data.size() - start);
    indices.resize(static_cast<std::size_t>(count));
    std::iota(indices.begin(), indices.end(), start);
    const auto batch = make_batch(data, indices, options);
    correct += count_correct(forward(model, params, batch.images).logits, batch.labels);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainReport run_training(const RunConfig& config, const Dataset& train, const Dataset* test,
                         const std::filesystem::path& metrics_csv,
                         const std::function<void(const EpochMetrics&)>& on_epoch) {
  TrainReport report;
  report.config = config;
  if (report.config.data.mean.empty() || report.config.data.std.empty()) {
    const auto stats = channel_stats(train);
    report.config.data.mean = stats.mean;
    report.config.data.std = stats.std;
  }
  report.config.validate();
  Rng init_rng(config.train.seed);
  Trainer trainer(report.config, init_nest(report.config.model, init_rng), train.size());

  std::ofstream csv;
  if (!metrics_csv.empty()) {
    csv.open(metrics_csv);
    if (!csv) throw IoError("cannot write " + metrics_csv.string());
    csv << "epoch,lr,train_loss,train_acc,eval_acc\n";
  }
  for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
    auto metrics = trainer.train_epoch(train);
    if (test) metrics.eval_acc = trainer.evaluate(*test);
    report.history.push_back(metrics);
    if (csv.is_open()) {
      csv << metrics.epoch << ',' << csv_number(metrics.lr) << ',' << csv_number(metrics.train_loss) << ','
          << csv_number(metrics.train_acc) << ',' << (test ? csv_number(metrics.eval_acc) : "") << '\n';
      csv.flush();
    }
    if (on_epoch) on_epoch(metrics);
  }
  report.train_acc = trainer.evaluate(train);
  report.eval_acc = test ? trainer.evaluate(*test) : -1.0;
  report.params = std::move(trainer.params());
  return report;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<AggregationSpec>& variants,
                                      const Dataset& train, const Dataset* test) {
  std::vector<AblationRow> rows;
  for (const auto& spec : variants) {
    AblationRow row;
    row.spec = spec;
    RunConfig config = base;
    config.model.aggregation = spec;
    try {
      row.params = count_params(nest_param_specs(config.model));
      const auto report = run_training(config, train, test);
      row.final_loss = report.history.empty() ? 0.0 : report.history.back().train_loss;
      row.train_acc = report.train_acc;
      row.eval_acc = report.eval_acc;
      row.status = "ok";
    } catch (const Error& e) {
      row.status = std::string(to_string(e.kind()));
      std::replace(row.status.begin(), row.status.end(), '-', '_');
    }
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "aggregation,plane,status,params,final_loss,train_acc,eval_acc\n";
  for (const auto& r : rows) {
    out << to_string(r.spec.kind) << ',' << to_string(r.spec.plane) << ',' << r.status << ',' << r.params << ',';
    if (r.status == "ok") {
      out << csv_number(r.final_loss) << ',' << csv_number(r.train_acc) << ','
          << (r.eval_acc >= 0 ? csv_number(r.eval_acc) : "");
    } else {
      out << ",,";
    }
    out << '\n';
  }
}

}  // namespace nest
