#include "nest/params.hpp"

#include <fstream>
#include <sstream>

#include "nest/serialize.hpp"

namespace nest {

std::int64_t count_params(const std::vector<ParamSpec>& specs) {
  std::int64_t total = 0;
  for (const auto& s : specs) total += numel(s.shape);
  return total;
}

template <typename T>
std::ptrdiff_t BasicParamSet<T>::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<std::ptrdiff_t>(i);
  }
  return -1;
}

template <typename T>
void BasicParamSet<T>::add(std::string name, BasicTensor<T> tensor, bool decay) {
  if (contains(name)) throw ContractError("duplicate parameter name " + name);
  entries_.push_back({std::move(name), std::move(tensor), decay});
}

template <typename T>
const BasicTensor<T>& BasicParamSet<T>::operator[](std::string_view name) const {
  const auto i = index_of(name);
  if (i < 0) throw ContractError("no parameter named " + std::string(name));
  return entries_[static_cast<std::size_t>(i)].tensor;
}

template <typename T>
BasicTensor<T>& BasicParamSet<T>::at(std::string_view name) {
  const auto i = index_of(name);
  if (i < 0) throw ContractError("no parameter named " + std::string(name));
  return entries_[static_cast<std::size_t>(i)].tensor;
}

template <typename T>
std::int64_t BasicParamSet<T>::count() const {
  std::int64_t total = 0;
  for (const auto& e : entries_) total += e.tensor.numel();
  return total;
}

template <typename T>
void BasicParamSet<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template class BasicParamSet<float>;
template class BasicParamSet<double>;

ParamSet init_params(const std::vector<ParamSpec>& specs, Rng& rng, double std) {
  ParamSet params;
  for (const auto& spec : specs) {
    std::vector<float> values(static_cast<std::size_t>(numel(spec.shape)));
    switch (spec.init) {
      case Init::kTruncNormal:
        for (auto& v : values) v = static_cast<float>(rng.trunc_normal(std));
        break;
      case Init::kZeros:
        break;
      case Init::kOnes:
        std::fill(values.begin(), values.end(), 1.0f);
        break;
    }
    params.add(spec.name, Tensor::from_vector(spec.shape, std::move(values), true), spec.decay);
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& dir, const ParamSet& params) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  std::ofstream blob(dir / "params.bin", std::ios::binary);
  if (!manifest || !blob) throw IoError("cannot write checkpoint in " + dir.string());
  for (const auto& e : params.entries()) {
    manifest << e.name << ' ' << (e.decay ? 1 : 0);
    for (auto extent : e.tensor.shape()) manifest << ' ' << extent;
    manifest << '\n';
    write_tensor(blob, e.tensor);
  }
  if (!manifest || !blob) throw IoError("failed writing checkpoint in " + dir.string());
}

ParamSet load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  std::ifstream blob(dir / "params.bin", std::ios::binary);
  if (!manifest || !blob) throw IoError("no checkpoint in " + dir.string());
  ParamSet params;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name;
    int decay = 1;
    fields >> name >> decay;
    Shape shape;
    for (std::int64_t extent; fields >> extent;) shape.push_back(extent);
    Tensor t = read_tensor(blob);
    if (t.shape() != shape) {
      throw MismatchError("checkpoint tensor " + name + " has shape " + shape_str(t.shape()) +
                          " but the manifest says " + shape_str(shape));
    }
    params.add(name, Tensor::from_vector(t.shape(), std::vector<float>(t.values().begin(), t.values().end()), true),
               decay != 0);
  }
  return params;
}

void restore_checkpoint(const std::filesystem::path& dir, ParamSet& params) {
  const ParamSet loaded = load_checkpoint(dir);
  if (loaded.size() != params.size()) {
    throw MismatchError("checkpoint holds " + std::to_string(loaded.size()) + " tensors, model expects " +
                        std::to_string(params.size()));
  }
  for (auto& e : params.entries()) {
    if (!loaded.contains(e.name)) throw MismatchError("checkpoint lacks parameter " + e.name);
    const auto& src = loaded[e.name];
    if (src.shape() != e.tensor.shape()) {
      throw MismatchError("parameter " + e.name + " is " + shape_str(e.tensor.shape()) + " in the model but " +
                          shape_str(src.shape()) + " in the checkpoint");
    }
    std::copy(src.values().begin(), src.values().end(), e.tensor.mutable_values().begin());
  }
}

}  // namespace nest
