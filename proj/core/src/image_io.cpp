#include "nest/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace nest {

namespace {

std::ofstream open_binary(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::uint8_t to_byte(double unit) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0));
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  while (in >> token) {
    if (token.front() != '#') return token;
    std::string rest;
    std::getline(in, rest);
  }
  throw IoError("truncated image header");
}

}  // namespace

void write_pgm(const std::filesystem::path& path, std::span<const float> values, int height, int width) {
  if (height <= 0 || width <= 0 || values.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw DimensionError("write_pgm: " + std::to_string(values.size()) + " values for a " + std::to_string(height) +
                         "x" + std::to_string(width) + " image");
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  std::vector<std::uint8_t> bytes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    bytes[i] = range > 0 ? to_byte((values[i] - *lo) / range) : 0;
  }
  auto out = open_binary(path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_ppm(const std::filesystem::path& path, const Tensor& image, float lo, float hi) {
  const bool batched = image.rank() == 4;
  if ((image.rank() != 3 && !batched) || (batched && image.dim(0) != 1) || image.dim(-1) != 3) {
    throw DimensionError("write_ppm expects (h, w, 3), got " + shape_str(image.shape()));
  }
  const auto h = image.dim(-3), w = image.dim(-2);
  std::vector<std::uint8_t> bytes(image.values().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte((image.values()[i] - lo) / (hi - lo));
  auto out = open_binary(path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (header_token(in) != "P6") throw IoError(path.string() + " is not a binary PPM");
  const int w = std::stoi(header_token(in));
  const int h = std::stoi(header_token(in));
  const int maxval = std::stoi(header_token(in));
  if (w <= 0 || h <= 0 || maxval != 255) throw IoError("unsupported PPM header in " + path.string());
  in.get();
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * 3);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw IoError("truncated PPM payload in " + path.string());
  }
  std::vector<float> values(bytes.begin(), bytes.end());
  for (auto& v : values) v /= 255.0f;
  return Tensor::from_vector({1, h, w, 3}, std::move(values));
}

}  // namespace nest
