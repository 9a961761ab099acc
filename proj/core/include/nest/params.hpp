#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nest/random.hpp"
#include "nest/tensor.hpp"

namespace nest {

enum class Init { kTruncNormal, kZeros, kOnes };

// Declarative description of one parameter; drives both initialization
// and analytic parameter counting.
struct ParamSpec {
  std::string name;
  Shape shape;
  Init init = Init::kTruncNormal;
  bool decay = true;
};

std::int64_t count_params(const std::vector<ParamSpec>& specs);

// Insertion-ordered, uniquely named parameter tensors.
template <typename T>
class BasicParamSet {
 public:
  struct Entry {
    std::string name;
    BasicTensor<T> tensor;
    bool decay = true;
  };

  void add(std::string name, BasicTensor<T> tensor, bool decay = true);
  bool contains(std::string_view name) const { return index_of(name) >= 0; }
  // Throws ContractError on a missing name.
  const BasicTensor<T>& operator[](std::string_view name) const;
  BasicTensor<T>& at(std::string_view name);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::int64_t count() const;
  void zero_grad();

  template <typename U>
  BasicParamSet<U> cast() const {
    BasicParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.tensor.template cast<U>(), e.decay);
    return out;
  }

 private:
  std::ptrdiff_t index_of(std::string_view name) const;
  std::vector<Entry> entries_;
};

using ParamSet = BasicParamSet<float>;

ParamSet init_params(const std::vector<ParamSpec>& specs, Rng& rng, double std = 0.02);

// Checkpoint directory: `manifest.txt` (name, decay flag, shape per line)
// plus `params.bin`, the tensor records concatenated in manifest order.
void save_checkpoint(const std::filesystem::path& dir, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& dir);
// Loads values into an existing set; names and shapes must agree.
void restore_checkpoint(const std::filesystem::path& dir, ParamSet& params);

}  // namespace nest
