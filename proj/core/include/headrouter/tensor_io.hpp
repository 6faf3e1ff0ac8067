#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "headrouter/tensor.hpp"

namespace headrouter {

// HRTF layout: "HRTF", u32 rank, rank x u32 dims, f32 payload. All little-endian.
void write_hrtf(std::ostream& os, const Tensor& t);
Tensor read_hrtf(std::istream& is);

void save_hrtf(const std::filesystem::path& path, const Tensor& t);
Tensor load_hrtf(const std::filesystem::path& path);

/// Text written with std::to_chars; parses back to the identical float.
std::string format_float(float v);
std::string format_double(double v);

}  // namespace headrouter
