#include "headrouter/tensor_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

namespace headrouter {

namespace {

constexpr std::array<char, 4> kMagic{'H', 'R', 'T', 'F'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), b.size());
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) {
    throw IoError("HRTF: truncated stream");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_hrtf(std::ostream& os, const Tensor& t) {
  if (t.empty()) throw ShapeError("HRTF: cannot write an empty tensor");
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.dims()) put_u32(os, static_cast<std::uint32_t>(d));
  for (float v : t.values()) put_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw IoError("HRTF: write failed");
}

Tensor read_hrtf(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError("HRTF: bad magic");
  }
  const std::uint32_t rank = get_u32(is);
  if (rank == 0 || rank > 8) throw IoError("HRTF: unsupported rank " + std::to_string(rank));
  std::vector<std::size_t> dims(rank);
  std::size_t count = 1;
  for (auto& d : dims) {
    d = get_u32(is);
    if (d == 0) throw IoError("HRTF: zero dimension");
    count *= d;
  }
  std::vector<float> data(count);
  for (float& v : data) v = std::bit_cast<float>(get_u32(is));
  return Tensor(std::move(dims), std::move(data));
}

void save_hrtf(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_hrtf(os, t);
}

Tensor load_hrtf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_hrtf(is);
}

std::string format_float(float v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace headrouter
