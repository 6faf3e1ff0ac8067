#pragma once

#include <filesystem>
#include <string>

#include "headrouter/tensor.hpp"

namespace headrouter {

/// ASCII PGM (P2, maxval 255). Values are min-max normalized and rounded;
/// a constant grid renders as all zeros.
std::string format_pgm(const Tensor& grid);
/// One grid row per line, raw values in shortest round-trip form.
std::string format_csv(const Tensor& grid);

void write_pgm(const std::filesystem::path& path, const Tensor& grid);
void write_csv(const std::filesystem::path& path, const Tensor& grid);

/// Parses the P2 subset written by format_pgm; returns the gray levels.
Tensor parse_pgm(const std::string& text);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace headrouter
