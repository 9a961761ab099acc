#include "nest/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace nest {

namespace {

constexpr std::array<char, 4> kMagic{'N', 'S', 'T', 'T'};

static_assert(std::endian::native == std::endian::little, "tensor records assume a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated tensor header");
  return v;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& tensor) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto extent : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(extent));
  const auto values = tensor.values();
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw IoError("failed writing tensor record");
}

Tensor read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw IoError("truncated tensor header");
  if (magic != kMagic) throw IoError("bad tensor magic");
  const auto rank = get_u32(in);
  if (rank > 8) throw IoError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& extent : shape) extent = get_u32(in);
  std::vector<float> values(static_cast<std::size_t>(numel(shape)));
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)))) {
    throw IoError("truncated tensor payload for shape " + shape_str(shape));
  }
  return Tensor::from_vector(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(out, tensor);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace nest
