#include "headrouter/rng.hpp"

#include <limits>

namespace headrouter {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t SeededRng::index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("SeededRng::index: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

Tensor SeededRng::uniform_matrix(std::size_t rows, std::size_t cols, float lo, float hi) {
  Tensor t({rows, cols});
  for (float& v : t.values()) v = uniform(lo, hi);
  return t;
}

}  // namespace headrouter
