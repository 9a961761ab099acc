#pragma once

#include <filesystem>
#include <iosfwd>

#include "nest/tensor.hpp"

// Flat tensor record: "NSTT", u32 rank, rank x u32 extents, then the f32
// payload; every integer and float little-endian.
namespace nest {

void write_tensor(std::ostream& out, const Tensor& tensor);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace nest
