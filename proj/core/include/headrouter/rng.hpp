#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "headrouter/tensor.hpp"

namespace headrouter {

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Reproducible generator: std::mt19937_64 (output fixed by the standard)
/// plus distribution code written out here, since the standard library
/// distributions are implementation-defined.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Top 24 bits scaled into [0, 1).
  float uniform01() { return static_cast<float>(engine_() >> 40) * 0x1.0p-24f; }
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform01(); }
  /// Unbiased integer in [0, n) by rejection; n must be positive.
  std::uint64_t index(std::uint64_t n);

  Tensor uniform_matrix(std::size_t rows, std::size_t cols, float lo, float hi);

 private:
  std::mt19937_64 engine_;
};

}  // namespace headrouter
