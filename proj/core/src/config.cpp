#include "nest/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "nest/error.hpp"
#include "presets.hpp"

namespace nest {

namespace {

constexpr std::pair<AggregationKind, std::string_view> kAggregationIds[] = {
    {AggregationKind::kConvLnMaxpool, "conv_ln_maxpool"}, {AggregationKind::kConvLnAvgpool, "conv_ln_avgpool"},
    {AggregationKind::kConvStride2, "conv_stride2"},      {AggregationKind::kMaxpoolOnly, "maxpool_only"},
    {AggregationKind::kPatchMerge, "patch_merge"},        {AggregationKind::kSubsample2x2, "subsample_2x2"},
    {AggregationKind::kConv4x1, "conv4x1"},
};

constexpr std::pair<DeaggregationKind, std::string_view> kDeaggregationIds[] = {
    {DeaggregationKind::kPixelShuffle, "pixel_shuffle"},
    {DeaggregationKind::kConvPixelShuffle, "conv3x3_pixel_shuffle"},
    {DeaggregationKind::kNearestConv, "nearest_conv3x3"},
};

std::string_view trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// ------------------------------------------------------------------ values

struct Value {
  enum class Type { kNumber, kBool, kString, kList } type = Type::kNumber;
  std::string text;  // numeric literal or string contents
  bool flag = false;
  std::vector<std::string> items;  // numeric literals
};

Value parse_value(std::string_view raw) {
  raw = trim(raw);
  Value v;
  if (raw.empty()) throw ConfigError("missing value");
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') throw ConfigError("unterminated string " + std::string(raw));
    v.type = Value::Type::kString;
    v.text = std::string(raw.substr(1, raw.size() - 2));
    if (v.text.find('"') != std::string::npos) throw ConfigError("stray quote in " + std::string(raw));
    return v;
  }
  if (raw.front() == '[') {
    if (raw.back() != ']') throw ConfigError("unterminated list " + std::string(raw));
    v.type = Value::Type::kList;
    auto body = trim(raw.substr(1, raw.size() - 2));
    while (!body.empty()) {
      const auto comma = body.find(',');
      const auto item = trim(body.substr(0, comma));
      if (item.empty()) throw ConfigError("empty list element in " + std::string(raw));
      v.items.emplace_back(item);
      if (comma == std::string_view::npos) break;
      body = body.substr(comma + 1);
    }
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.type = Value::Type::kBool;
    v.flag = raw == "true";
    return v;
  }
  v.type = Value::Type::kNumber;
  v.text = std::string(raw);
  return v;
}

double to_double(const std::string& text) {
  double out = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("not a number: " + text);
  return out;
}

long long to_integer(const std::string& text) {
  long long out = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("not an integer: " + text);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string out(buf, ptr);
  if (out.find_first_of(".en") == std::string::npos) out += ".0";
  return out;
}

const Value& expect(const Value& v, Value::Type type, std::string_view what) {
  if (v.type != type) throw ConfigError("expected " + std::string(what));
  return v;
}

// ------------------------------------------------------------------ fields

struct Field {
  std::string_view section;
  std::string_view key;
  std::function<void(RunConfig&, const Value&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Owner, typename M>
Field int_field(std::string_view section, std::string_view key, Owner RunConfig::*owner, M Owner::*member) {
  return {section, key,
          [=](RunConfig& c, const Value& v) {
            (c.*owner).*member = static_cast<M>(to_integer(expect(v, Value::Type::kNumber, "an integer").text));
          },
          [=](const RunConfig& c) { return std::to_string((c.*owner).*member); }};
}

template <typename Owner>
Field double_field(std::string_view section, std::string_view key, Owner RunConfig::*owner, double Owner::*member) {
  return {section, key,
          [=](RunConfig& c, const Value& v) {
            (c.*owner).*member = to_double(expect(v, Value::Type::kNumber, "a number").text);
          },
          [=](const RunConfig& c) { return format_double((c.*owner).*member); }};
}

template <typename Owner>
Field bool_field(std::string_view section, std::string_view key, Owner RunConfig::*owner, bool Owner::*member) {
  return {section, key,
          [=](RunConfig& c, const Value& v) { (c.*owner).*member = expect(v, Value::Type::kBool, "true or false").flag; },
          [=](const RunConfig& c) { return std::string((c.*owner).*member ? "true" : "false"); }};
}

template <typename Owner>
Field string_field(std::string_view section, std::string_view key, Owner RunConfig::*owner,
                   std::string Owner::*member) {
  return {section, key,
          [=](RunConfig& c, const Value& v) {
            (c.*owner).*member = expect(v, Value::Type::kString, "a quoted string").text;
          },
          [=](const RunConfig& c) { return '"' + (c.*owner).*member + '"'; }};
}

template <typename Owner, typename E>
Field list_field(std::string_view section, std::string_view key, Owner RunConfig::*owner,
                 std::vector<E> Owner::*member) {
  return {section, key,
          [=](RunConfig& c, const Value& v) {
            std::vector<E> out;
            for (const auto& item : expect(v, Value::Type::kList, "a [list]").items) {
              if constexpr (std::is_integral_v<E>) {
                out.push_back(static_cast<E>(to_integer(item)));
              } else {
                out.push_back(static_cast<E>(to_double(item)));
              }
            }
            (c.*owner).*member = std::move(out);
          },
          [=](const RunConfig& c) {
            std::string out = "[";
            const auto& values = (c.*owner).*member;
            for (std::size_t i = 0; i < values.size(); ++i) {
              if (i) out += ", ";
              if constexpr (std::is_integral_v<E>) {
                out += std::to_string(values[i]);
              } else {
                out += format_double(values[i]);
              }
            }
            return out + "]";
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using R = RunConfig;
    std::vector<Field> f;
    f.push_back({"run", "kind",
                 [](R& c, const Value& v) {
                   const auto& s = expect(v, Value::Type::kString, "a quoted string").text;
                   if (s != "classifier" && s != "generator") throw ConfigError("unknown run kind " + s);
                   c.kind = s;
                 },
                 [](const R& c) { return '"' + c.kind + '"'; }});

    f.push_back(string_field("model", "name", &R::model, &NestConfig::name));
    f.push_back(int_field("model", "image_size", &R::model, &NestConfig::image_size));
    f.push_back(int_field("model", "in_channels", &R::model, &NestConfig::in_channels));
    f.push_back(int_field("model", "patch_size", &R::model, &NestConfig::patch_size));
    f.push_back(int_field("model", "depth", &R::model, &NestConfig::depth));
    f.push_back(list_field("model", "dims", &R::model, &NestConfig::dims));
    f.push_back(list_field("model", "heads", &R::model, &NestConfig::heads));
    f.push_back(list_field("model", "layers", &R::model, &NestConfig::layers));
    f.push_back(int_field("model", "ffn_ratio", &R::model, &NestConfig::ffn_ratio));
    f.push_back(int_field("model", "num_classes", &R::model, &NestConfig::num_classes));
    f.push_back({"model", "aggregation",
                 [](R& c, const Value& v) {
                   c.model.aggregation = parse_aggregation(expect(v, Value::Type::kString, "a quoted string").text);
                 },
                 [](const R& c) { return '"' + to_string(c.model.aggregation) + '"'; }});
    f.push_back(double_field("model", "stochastic_depth", &R::model, &NestConfig::stochastic_depth));
    f.push_back(bool_field("model", "qkv_bias", &R::model, &NestConfig::qkv_bias));

    f.push_back(string_field("generator", "name", &R::generator, &GenConfig::name));
    f.push_back(int_field("generator", "latent_dim", &R::generator, &GenConfig::latent_dim));
    f.push_back(int_field("generator", "block_side", &R::generator, &GenConfig::block_side));
    f.push_back(int_field("generator", "out_channels", &R::generator, &GenConfig::out_channels));
    f.push_back(list_field("generator", "dims", &R::generator, &GenConfig::dims));
    f.push_back(list_field("generator", "heads", &R::generator, &GenConfig::heads));
    f.push_back(list_field("generator", "layers", &R::generator, &GenConfig::layers));
    f.push_back(int_field("generator", "ffn_ratio", &R::generator, &GenConfig::ffn_ratio));
    f.push_back({"generator", "deaggregation",
                 [](R& c, const Value& v) {
                   c.generator.deaggregation =
                       parse_deaggregation(expect(v, Value::Type::kString, "a quoted string").text);
                 },
                 [](const R& c) { return '"' + std::string(to_string(c.generator.deaggregation)) + '"'; }});
    f.push_back(bool_field("generator", "qkv_bias", &R::generator, &GenConfig::qkv_bias));

    f.push_back(double_field("train", "base_lr", &R::train, &TrainConfig::base_lr));
    f.push_back(int_field("train", "batch_size", &R::train, &TrainConfig::batch_size));
    f.push_back(double_field("train", "weight_decay", &R::train, &TrainConfig::weight_decay));
    f.push_back(double_field("train", "warmup_epochs", &R::train, &TrainConfig::warmup_epochs));
    f.push_back(int_field("train", "epochs", &R::train, &TrainConfig::epochs));
    f.push_back(double_field("train", "label_smoothing", &R::train, &TrainConfig::label_smoothing));
    f.push_back(int_field("train", "seed", &R::train, &TrainConfig::seed));
    f.push_back(bool_field("train", "augment", &R::train, &TrainConfig::augment));

    f.push_back(string_field("data", "source", &R::data, &DataConfig::source));
    f.push_back(int_field("data", "synth_train", &R::data, &DataConfig::synth_train));
    f.push_back(int_field("data", "synth_test", &R::data, &DataConfig::synth_test));
    f.push_back(list_field("data", "mean", &R::data, &DataConfig::mean));
    f.push_back(list_field("data", "std", &R::data, &DataConfig::std));

    f.push_back(bool_field("interpret", "positive_gradient", &R::interpret, &InterpretConfig::positive_gradient));
    return f;
  }();
  return table;
}

const Field* find_field(std::string_view section, std::string_view key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

bool known_section(std::string_view section) {
  return std::any_of(fields().begin(), fields().end(), [&](const Field& f) { return f.section == section; });
}

std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (!quoted && line[i] == '#') return std::string(line.substr(0, i));
  }
  return std::string(line);
}

void check_levels(std::string_view what, const std::vector<int>& v, int levels) {
  if (static_cast<int>(v.size()) != levels) {
    throw ConfigError(std::string(what) + " lists " + std::to_string(v.size()) + " levels, expected " +
                      std::to_string(levels));
  }
  for (int x : v) {
    if (x <= 0) throw ConfigError(std::string(what) + " entries must be positive");
  }
}

}  // namespace

// ------------------------------------------------------------------ enums

std::string_view to_string(AggregationKind kind) {
  for (const auto& [k, id] : kAggregationIds) {
    if (k == kind) return id;
  }
  return "?";
}

std::string_view to_string(Plane plane) { return plane == Plane::kImage ? "image" : "block"; }

std::string to_string(const AggregationSpec& spec) {
  return std::string(to_string(spec.kind)) + "@" + std::string(to_string(spec.plane));
}

AggregationSpec parse_aggregation(std::string_view text) {
  AggregationSpec spec;
  const auto at = text.find('@');
  const auto id = text.substr(0, at);
  const auto it = std::find_if(std::begin(kAggregationIds), std::end(kAggregationIds),
                               [&](const auto& entry) { return entry.second == id; });
  if (it == std::end(kAggregationIds)) throw ConfigError("unknown aggregation variant " + std::string(id));
  spec.kind = it->first;
  if (at != std::string_view::npos) {
    const auto plane = text.substr(at + 1);
    if (plane == "image") {
      spec.plane = Plane::kImage;
    } else if (plane == "block") {
      spec.plane = Plane::kBlock;
    } else {
      throw ConfigError("unknown aggregation plane " + std::string(plane));
    }
  }
  return spec;
}

std::vector<AggregationKind> aggregation_kinds() {
  std::vector<AggregationKind> out;
  for (const auto& [k, id] : kAggregationIds) out.push_back(k);
  return out;
}

std::string_view to_string(DeaggregationKind kind) {
  for (const auto& [k, id] : kDeaggregationIds) {
    if (k == kind) return id;
  }
  return "?";
}

DeaggregationKind parse_deaggregation(std::string_view text) {
  for (const auto& [k, id] : kDeaggregationIds) {
    if (id == text) return k;
  }
  throw ConfigError("unknown de-aggregation variant " + std::string(text));
}

// ------------------------------------------------------------------ validation

void NestConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || in_channels <= 0) throw ConfigError("image and patch sizes must be positive");
  if (depth < 1 || depth > 8) throw HierarchyError("hierarchy depth must lie in [1, 8]");
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  if (ffn_ratio < 1) throw ConfigError("ffn_ratio must be positive");
  if (stochastic_depth < 0 || stochastic_depth > 1) throw ConfigError("stochastic_depth must lie in [0, 1]");
  check_levels("dims", dims, depth);
  check_levels("heads", heads, depth);
  check_levels("layers", layers, depth);
  if (image_size % patch_size != 0) {
    throw ConfigError("image size " + std::to_string(image_size) + " is not divisible by patch size " +
                      std::to_string(patch_size));
  }
  const int g = grid();
  if (g % (1 << (depth - 1)) != 0) {
    throw HierarchyError("patch grid " + std::to_string(g) + " is not divisible by 2^" + std::to_string(depth - 1));
  }
  for (int i = 0; i < depth; ++i) {
    if (dims[i] % heads[i] != 0) {
      throw ConfigError("level " + std::to_string(i) + ": dim " + std::to_string(dims[i]) +
                        " is not divisible by " + std::to_string(heads[i]) + " heads");
    }
  }
}

void GenConfig::validate() const {
  const int n = levels();
  if (n < 1) throw ConfigError("generator needs at least one level");
  check_levels("generator heads", heads, n);
  check_levels("generator layers", layers, n);
  if (block_side <= 0 || out_channels <= 0 || latent_dim < 0 || ffn_ratio < 1) {
    throw ConfigError("generator sizes must be positive");
  }
  for (int i = 0; i < n; ++i) {
    if (dims[i] <= 0 || dims[i] % heads[i] != 0) {
      throw ConfigError("generator level " + std::to_string(i) + ": dim " + std::to_string(dims[i]) +
                        " is not divisible by " + std::to_string(heads[i]) + " heads");
    }
    if (i + 1 < n && dims[i + 1] * 4 != dims[i]) {
      throw ConfigError("generator dims must shrink exactly 4x per level");
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (base_lr < 0 || weight_decay < 0 || warmup_epochs < 0) throw ConfigError("negative optimizer setting");
  if (label_smoothing < 0 || label_smoothing >= 1) throw ConfigError("label_smoothing must lie in [0, 1)");
}

void RunConfig::validate() const {
  if (kind == "generator") {
    generator.validate();
  } else {
    model.validate();
  }
  train.validate();
  if (!data.mean.empty() && data.mean.size() != static_cast<std::size_t>(model.in_channels)) {
    throw ConfigError("data.mean must list one value per channel");
  }
  if (data.std.size() != data.mean.size()) throw ConfigError("data.mean and data.std differ in length");
  for (double s : data.std) {
    if (!(s > 0)) throw ConfigError("data.std entries must be positive");
  }
}

// ------------------------------------------------------------------ text

void set_option(RunConfig& config, std::string_view dotted_key, std::string_view value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string_view::npos) throw ConfigError("option must be section.key: " + std::string(dotted_key));
  const auto* field = find_field(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
  if (!field) throw ConfigError("unknown option " + std::string(dotted_key));
  field->set(config, parse_value(value));
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string stripped = strip_comment(raw);
    const auto line = trim(stripped);
    if (line.empty()) continue;
    const auto where = " (line " + std::to_string(line_no) + ")";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header" + where);
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!known_section(section)) throw ConfigError("unknown section [" + section + "]" + where);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key = value" + where);
    if (section.empty()) throw ConfigError("key outside of any section" + where);
    const auto key = trim(line.substr(0, eq));
    const auto* field = find_field(section, key);
    if (!field) throw ConfigError("unknown key " + section + "." + std::string(key) + where);
    try {
      field->set(config, parse_value(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(section + "." + std::string(key) + ": " + e.what() + where);
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string to_text(const RunConfig& config) {
  std::string out;
  std::string_view section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!out.empty()) out += '\n';
      section = f.section;
      out += "[" + std::string(section) + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(config) + "\n";
  }
  return out;
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_text(config);
}

// ------------------------------------------------------------------ presets

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : detail::kPresets) names.emplace_back(p.name);
  return names;
}

std::string preset_text(std::string_view name) {
  for (const auto& p : detail::kPresets) {
    if (p.name == name) return std::string(p.text);
  }
  std::string known;
  for (const auto& p : detail::kPresets) known += " " + std::string(p.name);
  throw ConfigError("unknown preset " + std::string(name) + "; known:" + known);
}

RunConfig preset(std::string_view name) { return parse_config(preset_text(name)); }

}  // namespace nest
