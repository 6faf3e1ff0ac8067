#include "oracles.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace headrouter::oracle {

Matrix to_matrix(const Tensor& t) {
  const std::size_t rows = t.dims()[0], cols = t.dims()[1];
  Matrix m(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m[i][j] = t.values()[i * cols + j];
  }
  return m;
}

double max_abs_diff(const Matrix& a, const Tensor& b) {
  const std::size_t cols = b.dims()[1];
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      worst = std::max(worst, std::fabs(a[i][j] - b.values()[i * cols + j]));
    }
  }
  return worst;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.size(), std::vector<double>(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.front().size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

NaiveAttention attention(const Tensor& embeddings, std::size_t text_len, const BlockWeights& w) {
  const Matrix x = to_matrix(embeddings);
  const std::size_t L = x.size(), D = w.d_model, dh = w.d_head, H = w.heads;
  NaiveAttention out;
  Matrix concat(L, std::vector<double>(H * dh, 0.0));
  for (std::size_t h = 0; h < H; ++h) {
    Matrix q(L, std::vector<double>(dh)), k = q, v = q;
    for (std::size_t i = 0; i < L; ++i) {
      const PathProjections& path = i < text_len ? w.text : w.image;
      for (std::size_t c = 0; c < dh; ++c) {
        double sq = 0, sk = 0, sv = 0;
        for (std::size_t e = 0; e < D; ++e) {
          sq += x[i][e] * path.query[h].values()[e * dh + c];
          sk += x[i][e] * path.key[h].values()[e * dh + c];
          sv += x[i][e] * path.value[h].values()[e * dh + c];
        }
        q[i][c] = sq;
        k[i][c] = sk;
        v[i][c] = sv;
      }
    }
    Matrix a(L, std::vector<double>(L));
    for (std::size_t i = 0; i < L; ++i) {
      double hi = -INFINITY;
      for (std::size_t j = 0; j < L; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[i][c] * k[j][c];
        a[i][j] = dot / std::sqrt(static_cast<double>(dh));
        hi = std::max(hi, a[i][j]);
      }
      double z = 0;
      for (std::size_t j = 0; j < L; ++j) z += (a[i][j] = std::exp(a[i][j] - hi));
      for (std::size_t j = 0; j < L; ++j) a[i][j] /= z;
    }
    Matrix f(L, std::vector<double>(dh, 0.0));
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t c = 0; c < dh; ++c)
        for (std::size_t j = 0; j < L; ++j) f[i][c] += a[i][j] * v[j][c];
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t c = 0; c < dh; ++c) concat[i][h * dh + c] = f[i][c];
    out.maps.push_back(std::move(a));
    out.features.push_back(std::move(f));
  }
  out.output = matmul(concat, to_matrix(w.output));
  return out;
}

Matrix head_contribution(const BlockWeights& w, std::size_t head, const Matrix& features) {
  const std::size_t L = features.size(), dh = w.d_head;
  Matrix concat(L, std::vector<double>(w.heads * dh, 0.0));
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t c = 0; c < dh; ++c) concat[i][head * dh + c] = features[i][c];
  return matmul(concat, to_matrix(w.output));
}

double flat_cosine(const Tensor& a, const Tensor& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a.values()[i]) * b.values()[i];
    na += double(a.values()[i]) * a.values()[i];
    nb += double(b.values()[i]) * b.values()[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

std::uint64_t fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Matrix prompt_embedding(const std::string& prompt, std::size_t d_model, std::size_t text_len,
                        std::uint64_t seed) {
  std::istringstream is(prompt);
  std::vector<std::string> tokens;
  for (std::string t; is >> t;) tokens.push_back(t);
  while (tokens.size() < text_len) tokens.push_back("<pad>");
  Matrix m(text_len, std::vector<double>(d_model));
  for (std::size_t r = 0; r < text_len; ++r) {
    std::mt19937_64 eng(mix(fnv(tokens[r]) ^ mix(r ^ mix(seed))));
    for (std::size_t c = 0; c < d_model; ++c) {
      const float u = static_cast<float>(eng() >> 40) / 16777216.0f;
      m[r][c] = -1.0f + 2.0f * u;
    }
  }
  return m;
}

Tensor random_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, float lo, float hi) {
  return rng.uniform_matrix(rows, cols, lo, hi);
}

BlockWeights random_block(SeededRng& rng, std::size_t heads, std::size_t d_model,
                          std::size_t d_head, float scale) {
  BlockWeights w = BlockWeights::zeros(heads, d_model, d_head);
  for (auto* path : {&w.image, &w.text})
    for (auto* mats : {&path->query, &path->key, &path->value})
      for (auto& m : *mats) m = rng.uniform_matrix(d_model, d_head, -scale, scale);
  w.output = rng.uniform_matrix(heads * d_head, d_model, -scale, scale);
  return w;
}

}  // namespace headrouter::oracle
