#include "headrouter/heatmap_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "headrouter/tensor_io.hpp"

namespace headrouter {

std::string format_pgm(const Tensor& grid) {
  const std::size_t rows = grid.rows(), cols = grid.cols();
  const auto [lo, hi] = std::minmax_element(grid.values().begin(), grid.values().end());
  const double min = *lo, range = static_cast<double>(*hi) - *lo;
  std::ostringstream os;
  os << "P2\n" << cols << ' ' << rows << "\n255\n";
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const long level = range > 0.0 ? std::lround(255.0 * (grid(i, j) - min) / range) : 0;
      if (j) os << ' ';
      os << std::clamp(level, 0L, 255L);
    }
    os << '\n';
  }
  return os.str();
}

std::string format_csv(const Tensor& grid) {
  std::string out;
  for (std::size_t i = 0; i < grid.rows(); ++i) {
    for (std::size_t j = 0; j < grid.cols(); ++j) {
      if (j) out += ',';
      out += format_float(grid(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_pgm(const std::filesystem::path& path, const Tensor& grid) {
  write_text_file(path, format_pgm(grid));
}

void write_csv(const std::filesystem::path& path, const Tensor& grid) {
  write_text_file(path, format_csv(grid));
}

Tensor parse_pgm(const std::string& text) {
  std::istringstream is(text);
  std::string magic;
  std::size_t cols = 0, rows = 0;
  int maxval = 0;
  if (!(is >> magic >> cols >> rows >> maxval) || magic != "P2" || maxval != 255 || rows == 0 ||
      cols == 0) {
    throw IoError("parse_pgm: unsupported header");
  }
  Tensor grid({rows, cols});
  for (float& v : grid.values()) {
    int level = 0;
    if (!(is >> level)) throw IoError("parse_pgm: truncated payload");
    v = static_cast<float>(level);
  }
  return grid;
}

}  // namespace headrouter
