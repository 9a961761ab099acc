#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "nest/bench.hpp"
#include "nest/config.hpp"
#include "nest/data.hpp"
#include "nest/generator.hpp"
#include "nest/image_io.hpp"
#include "nest/interpret.hpp"
#include "nest/model.hpp"
#include "nest/ops.hpp"
#include "nest/serialize.hpp"
#include "nest/training.hpp"

namespace fs = std::filesystem;
using namespace nest;

namespace {

// Published parameter counts the `params --expect-published` check compares against.
const std::map<std::string, double> kPublishedParams = {
    {"nest-t-cifar", 6.2e6}, {"nest-s-cifar", 23.4e6}, {"nest-b-cifar", 90.1e6},
    {"nest-t-imagenet", 17e6}, {"nest-s-imagenet", 38e6}, {"nest-b-imagenet", 68e6},
    {"gen-64", 74.4e6},
};
constexpr double kParamTolerance = 0.02;

struct Common {
  std::string config_path;
  std::string preset_name;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
};

void add_common(CLI::App& cmd, Common& c) {
  auto* config = cmd.add_option("--config", c.config_path, "Run configuration file");
  cmd.add_option("--preset", c.preset_name, "Embedded preset name")->excludes(config);
  cmd.add_option("--set", c.overrides, "Override as section.key=value (repeatable)");
  cmd.add_option("--seed", c.seed, "Random seed");
  cmd.add_option("--out", c.out, "Root directory for run outputs");
}

RunConfig resolve(const Common& c, std::string_view fallback_preset) {
  RunConfig config = !c.config_path.empty() ? load_config(c.config_path)
                                            : preset(c.preset_name.empty() ? fallback_preset : c.preset_name);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not section.key=value");
    set_option(config, o.substr(0, eq), o.substr(eq + 1));
  }
  if (c.seed) config.train.seed = *c.seed;
  return config;
}

fs::path make_run_dir(const Common& c, const RunConfig& config, std::string_view command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream name;
  name << command << '-' << std::put_time(&utc, "%Y%m%d-%H%M%S") << "-seed" << config.train.seed;
  auto dir = fs::path(c.out) / name.str();
  for (int i = 1; fs::exists(dir); ++i) dir = fs::path(c.out) / (name.str() + "-" + std::to_string(i));
  fs::create_directories(dir);
  save_config(dir / "config.cfg", config);
  return dir;
}

void require_kind(const RunConfig& config, std::string_view kind) {
  if (config.kind != kind) throw ConfigError("this command needs a " + std::string(kind) + " configuration");
}

ParamSet classifier_params(const RunConfig& config, const std::string& checkpoint) {
  if (!checkpoint.empty()) {
    Rng rng(0);
    auto params = init_nest(config.model, rng);
    restore_checkpoint(checkpoint, params);
    return params;
  }
  std::cerr << "note: no --checkpoint given, using freshly initialized weights\n";
  Rng rng(config.train.seed);
  return init_nest(config.model, rng);
}

std::string millions(std::int64_t count) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << static_cast<double>(count) / 1e6 << "M";
  return out.str();
}

// ---- params ---------------------------------------------------------------

struct ParamsArgs {
  Common common;
  bool expect_published = false;
  bool breakdown = false;
};

int cmd_params(const ParamsArgs& a) {
  const auto config = resolve(a.common, "nest-t-cifar");
  const auto specs = config.kind == "generator" ? generator_param_specs(config.generator) : nest_param_specs(config.model);
  const auto total = count_params(specs);
  const auto name = config.kind == "generator" ? config.generator.name : config.model.name;
  std::cout << name << ": " << total << " parameters (" << millions(total) << ")\n";
  if (a.breakdown) {
    std::map<std::string, std::int64_t> groups;
    std::vector<std::string> order;
    for (const auto& s : specs) {
      const auto group = s.name.substr(0, s.name.find('/'));
      if (!groups.contains(group)) order.push_back(group);
      groups[group] += numel(s.shape);
    }
    for (const auto& g : order) std::cout << "  " << std::left << std::setw(14) << g << groups[g] << '\n';
  }
  if (!a.expect_published) return 0;
  const auto it = kPublishedParams.find(name);
  if (it == kPublishedParams.end()) throw ConfigError("no published parameter count for '" + name + "'");
  const double rel = static_cast<double>(total) / it->second - 1.0;
  std::cout << "published " << millions(static_cast<std::int64_t>(it->second)) << ", relative difference "
            << std::showpos << std::setprecision(2) << std::fixed << rel * 100 << "%" << std::noshowpos << '\n';
  if (std::abs(rel) > kParamTolerance) {
    throw MismatchError("parameter count is outside the 2% tolerance of the published value");
  }
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::optional<int> epochs;
  std::optional<int> batch;
  std::string data;
  std::string aggregation;
  std::string ablate;
};

std::vector<AggregationSpec> ablation_variants(const std::string& list) {
  std::vector<AggregationSpec> out;
  if (list == "all") {
    for (auto kind : aggregation_kinds())
      for (auto plane : {Plane::kImage, Plane::kBlock}) out.push_back({kind, plane});
    return out;
  }
  std::stringstream in(list);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(parse_aggregation(item));
  }
  if (out.empty()) throw ConfigError("--ablate needs at least one aggregation id");
  return out;
}

int cmd_train(const TrainArgs& a) {
  auto config = resolve(a.common, "nest-micro");
  require_kind(config, "classifier");
  if (a.epochs) config.train.epochs = *a.epochs;
  if (a.batch) config.train.batch_size = *a.batch;
  if (!a.data.empty()) config.data.source = a.data;
  if (!a.aggregation.empty()) config.model.aggregation = parse_aggregation(a.aggregation);
  config.validate();
  const auto splits = load_splits(config.data, config.model, config.train.seed);

  if (!a.ablate.empty()) {
    const auto dir = make_run_dir(a.common, config, "ablate");
    const auto rows = run_ablation(config, ablation_variants(a.ablate), splits.train, &splits.test);
    write_ablation_csv(dir / "ablation.csv", rows);
    for (const auto& r : rows) {
      std::cout << std::left << std::setw(28) << to_string(r.spec) << r.status;
      if (r.status == "ok") std::cout << "  train_acc=" << r.train_acc << " eval_acc=" << r.eval_acc;
      std::cout << '\n';
    }
    std::cout << "wrote " << (dir / "ablation.csv").string() << '\n';
    return 0;
  }

  const auto dir = make_run_dir(a.common, config, "train");
  const auto report = run_training(config, splits.train, &splits.test, dir / "metrics.csv", [](const EpochMetrics& m) {
    std::cout << "epoch " << m.epoch << " lr=" << m.lr << " loss=" << m.train_loss << " train_acc=" << m.train_acc
              << " eval_acc=" << m.eval_acc << std::endl;
  });
  // Rewrite the config with the normalization statistics filled in.
  save_config(dir / "config.cfg", report.config);
  save_checkpoint(dir / "checkpoint", report.params);
  std::cout << "final train_acc=" << report.train_acc << " eval_acc=" << report.eval_acc << "\nwrote " << dir.string()
            << '\n';
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string data;
};

int cmd_eval(const EvalArgs& a) {
  auto config = resolve(a.common, "nest-micro");
  require_kind(config, "classifier");
  if (!a.data.empty()) config.data.source = a.data;
  const auto splits = load_splits(config.data, config.model, config.train.seed);
  if (config.data.mean.empty()) {
    const auto stats = channel_stats(splits.train);
    config.data.mean = stats.mean;
    config.data.std = stats.std;
  }
  const auto params = classifier_params(config, a.checkpoint);
  std::cout << "train_acc=" << evaluate(config.model, params, splits.train, config.data.mean, config.data.std)
            << " eval_acc=" << evaluate(config.model, params, splits.test, config.data.mean, config.data.std) << '\n';
  return 0;
}

// ---- interpret --------------------------------------------------------------

struct InterpretArgs {
  Common common;
  std::string mode;
  std::string checkpoint;
  std::string input;
  int index = 0;
  std::optional<int> target_class;
  double threshold = 0.5;
  bool negative_gradient = false;
};

Tensor load_input(const InterpretArgs& a, const RunConfig& config) {
  Tensor image;
  if (a.input.empty()) {
    const auto splits = load_splits(config.data, config.model, config.train.seed);
    const std::int64_t i = a.index;
    image = make_batch(splits.test, std::span(&i, 1)).images;
  } else if (fs::path(a.input).extension() == ".ppm") {
    image = read_ppm(a.input);
  } else {
    image = load_tensor(a.input);
    if (image.rank() == 3) image = reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
  }
  if (!config.data.mean.empty()) image = normalize(image, config.data.mean, config.data.std);
  return image;
}

int cmd_interpret(const InterpretArgs& a) {
  auto config = resolve(a.common, "nest-micro");
  require_kind(config, "classifier");
  if (a.negative_gradient) config.interpret.positive_gradient = false;
  const auto params = classifier_params(config, a.checkpoint);
  const auto image = load_input(a, config);
  int target = 0;
  if (a.target_class) {
    target = *a.target_class;
  } else {
    NoGradGuard no_grad;
    const auto logits = forward(config.model, params, image).logits;
    const auto values = logits.values();
    target = static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
  }
  const auto dir = make_run_dir(a.common, config, "interpret-" + a.mode);

  if (a.mode == "gradcat") {
    const auto paths = gradcat(config.model, params, image, {target}, {config.interpret.positive_gradient});
    const auto json = paths.front().to_json();
    std::ofstream(dir / "path.json") << json << '\n';
    std::cout << json << '\n';
    return 0;
  }
  const auto map = cam(config.model, params, image, target);
  const auto display = upsample_bilinear(map, static_cast<int>(image.dim(1)), static_cast<int>(image.dim(2)));
  if (a.mode == "cam") {
    write_pgm(dir / "cam.pgm", display.values, display.height, display.width);
    std::cout << "class " << target << ": wrote " << (dir / "cam.pgm").string() << '\n';
    return 0;
  }
  const auto box = cam_to_bbox(display, a.threshold);
  std::ostringstream json;
  json << "{\"class\": " << target << ", \"threshold\": " << a.threshold << ", \"bbox\": ";
  if (box) {
    json << "{\"x0\": " << box->x0 << ", \"y0\": " << box->y0 << ", \"x1\": " << box->x1 << ", \"y1\": " << box->y1 << "}";
  } else {
    json << "null";
  }
  json << "}";
  std::ofstream(dir / "bbox.json") << json.str() << '\n';
  write_pgm(dir / "cam.pgm", display.values, display.height, display.width);
  std::cout << json.str() << '\n';
  return 0;
}

// ---- generate ----------------------------------------------------------------

struct GenerateArgs {
  Common common;
  std::string checkpoint;
  int count = 1;
};

int cmd_generate(const GenerateArgs& a) {
  const auto config = resolve(a.common, "gen-64");
  require_kind(config, "generator");
  Rng rng(config.train.seed);
  auto params = init_generator(config.generator, rng);
  if (!a.checkpoint.empty()) restore_checkpoint(a.checkpoint, params);
  const auto dir = make_run_dir(a.common, config, "generate");
  const auto z = sample_noise(config.generator, a.count, rng);
  GenTrace trace;
  Tensor images;
  {
    NoGradGuard no_grad;
    images = generate(config.generator, params, z, &trace);
  }
  std::cout << "blocks per level:";
  for (int b : trace.blocks) std::cout << ' ' << b;
  std::cout << "\noutput " << shape_str(images.shape()) << '\n';
  const auto per_image = images.numel() / a.count;
  for (int i = 0; i < a.count; ++i) {
    const auto first = images.values().begin() + i * per_image;
    const auto one = Tensor::from_vector({images.dim(1), images.dim(2), images.dim(3)},
                                         std::vector<float>(first, first + per_image));
    const auto path = dir / ("sample_" + std::to_string(i) + ".ppm");
    write_ppm(path, one);
    std::cout << "wrote " << path.string() << '\n';
  }
  return 0;
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  Common common;
  int batch = 8;
  int iters = 5;
  int warmup = 1;
};

int cmd_bench(const BenchArgs& a) {
  const auto config = resolve(a.common, "nest-t-cifar");
  require_kind(config, "classifier");
  Rng rng(config.train.seed);
  const auto params = init_nest(config.model, rng);
  const auto r = bench_throughput(config.model, params, a.batch, a.iters, a.warmup);
  std::cout << config.model.name << " batch=" << r.batch << " iters=" << r.iters << " median_batch_s=" << r.median_seconds
            << " images_per_s=" << r.images_per_second << '\n';
  return 0;
}

void apply_thread_limit() {
  if (const char* env = std::getenv("NEST_NUM_THREADS")) {
    int threads = 0;
    try {
      threads = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError("NEST_NUM_THREADS must be an integer, got '" + std::string(env) + "'");
    }
    if (threads < 1) throw ConfigError("NEST_NUM_THREADS must be positive");
    set_num_threads(threads);
  } else {
    set_num_threads(1);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NesT: nested hierarchical transformer toolkit"};
  app.require_subcommand(1);

  ParamsArgs params_args;
  auto* params = app.add_subcommand("params", "Count model parameters");
  add_common(*params, params_args.common);
  params->add_flag("--expect-published", params_args.expect_published, "Check against the published count (2% tolerance)");
  params->add_flag("--breakdown", params_args.breakdown, "Print per-group counts");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a classifier");
  add_common(*train, train_args.common);
  train->add_option("--epochs", train_args.epochs, "Number of epochs");
  train->add_option("--batch", train_args.batch, "Batch size");
  train->add_option("--data", train_args.data, "CIFAR-10 binary directory or 'synth'");
  train->add_option("--aggregation", train_args.aggregation, "Aggregation id[@image|@block]");
  train->add_option("--ablate", train_args.ablate, "Comma-separated aggregation ids, or 'all'");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(*eval, eval_args.common);
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint directory");
  eval->add_option("--data", eval_args.data, "CIFAR-10 binary directory or 'synth'");

  InterpretArgs interpret_args;
  auto* interpret = app.add_subcommand("interpret", "Class-aware traversal, CAM heatmaps and boxes");
  add_common(*interpret, interpret_args.common);
  interpret->add_option("mode", interpret_args.mode, "gradcat, cam or bbox")
      ->required()
      ->check(CLI::IsMember({"gradcat", "cam", "bbox"}));
  interpret->add_option("--checkpoint", interpret_args.checkpoint, "Checkpoint directory");
  interpret->add_option("--input", interpret_args.input, "Image as PPM or tensor blob, values in [0, 1]");
  interpret->add_option("--index", interpret_args.index, "Test-split sample used when --input is absent");
  interpret->add_option("--class", interpret_args.target_class, "Target class (default: predicted)");
  interpret->add_option("--threshold", interpret_args.threshold, "Box threshold on the normalized CAM");
  interpret->add_flag("--negative-gradient", interpret_args.negative_gradient, "Score with -dY/dA instead of +dY/dA");

  GenerateArgs generate_args;
  auto* gen = app.add_subcommand("generate", "Sample images from the transposed decoder");
  add_common(*gen, generate_args.common);
  gen->add_option("--checkpoint", generate_args.checkpoint, "Checkpoint directory");
  gen->add_option("--count", generate_args.count, "Number of images")->check(CLI::PositiveNumber);

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Inference throughput");
  add_common(*bench, bench_args.common);
  bench->add_option("--batch", bench_args.batch, "Batch size");
  bench->add_option("--iters", bench_args.iters, "Timed iterations");
  bench->add_option("--warmup", bench_args.warmup, "Untimed iterations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    apply_thread_limit();
    if (*params) return cmd_params(params_args);
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args);
    if (*interpret) return cmd_interpret(interpret_args);
    if (*gen) return cmd_generate(generate_args);
    if (*bench) return cmd_bench(bench_args);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
