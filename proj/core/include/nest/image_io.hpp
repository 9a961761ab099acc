#pragma once

#include <filesystem>
#include <span>

#include "nest/tensor.hpp"

namespace nest {

// Binary greyscale (P5, maxval 255); values are min-max scaled to 0..255.
void write_pgm(const std::filesystem::path& path, std::span<const float> values, int height, int width);

// Binary colour (P6, maxval 255) from an (h, w, 3) or (1, h, w, 3) tensor;
// [lo, hi] maps linearly onto 0..255 with clamping.
void write_ppm(const std::filesystem::path& path, const Tensor& image, float lo = -1.0f, float hi = 1.0f);

// Reads a P6 file into (1, h, w, 3) with values in [0, 1].
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace nest
