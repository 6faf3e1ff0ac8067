#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>

#include "headrouter/heatmap_io.hpp"
#include "headrouter/rng.hpp"
#include "headrouter/token_refinement.hpp"
#include "oracles.hpp"

using namespace headrouter;

TEST_CASE("dtr weights closed forms") {
  DtrConfig cfg;
  cfg.alpha = 2.0;
  cfg.upsilon = 1.0;
  // N = 1: softmax term is 1, weight = 2 * sigmoid(1) = 1.46211715726...
  const TokenWeightMap one = dtr_weights(Tensor::from_rows({{0.37f, 0.9f}}), cfg);
  CHECK(std::fabs(one.w_hat(0, 0) - 1.4621) < 1e-4);
  CHECK(std::fabs(one.w_hat(0, 1) - 1.4621) < 1e-4);
  // N = 2 equal entries: 2 * sigmoid(0.5) = 1.24491866240...
  const TokenWeightMap two = dtr_weights(Tensor::from_rows({{0.2f}, {0.2f}}), cfg);
  CHECK(std::fabs(two.w_hat(0, 0) - 1.2449) < 1e-4);
  CHECK(two.w_hat(0, 0) == two.w_hat(1, 0));
}

TEST_CASE("dtr weights: softmax normalization, bounds and monotonicity") {
  SeededRng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    DtrConfig cfg;
    cfg.alpha = rng.uniform(0.1f, 4.0f);
    cfg.upsilon = rng.uniform(0.1f, 5.0f);
    const std::size_t n = 1 + rng.index(12), m = 1 + rng.index(6);
    const Tensor a = rng.uniform_matrix(n, m, 0, 1);
    const TokenWeightMap w = dtr_weights(a, cfg);
    for (std::size_t j = 0; j < m; ++j) {
      // Invert the sigmoid to recover the inner softmax terms.
      double total = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = w.w_hat(i, j) / cfg.alpha;
        total += std::log(x / (1 - x)) / cfg.upsilon;
      }
      REQUIRE(std::fabs(total - 1.0) < 1e-3);
      double z = 0;
      for (std::size_t i = 0; i < n; ++i) z += std::exp(double(a(i, j)));
      for (std::size_t i = 0; i < n; ++i) {
        const double expect = cfg.alpha * (1 / (1 + std::exp(-cfg.upsilon * std::exp(double(a(i, j))) / z)));
        REQUIRE(std::fabs(w.w_hat(i, j) - expect) < 1e-6);
        REQUIRE(w.w_hat(i, j) > 0.0f);
        REQUIRE(w.w_hat(i, j) < static_cast<float>(cfg.alpha));
        for (std::size_t k = 0; k < n; ++k) {
          if (a(i, j) < a(k, j)) REQUIRE(w.w_hat(i, j) <= w.w_hat(k, j));
        }
      }
    }
  }
}

TEST_CASE("target text columns combine by maximum") {
  DtrConfig cfg;
  const Tensor a = Tensor::from_rows({{0.9f, 0.1f, 0.3f}, {0.1f, 0.8f, 0.3f}});
  const TokenWeightMap all = dtr_weights(a, cfg);
  cfg.target_text_indices = {0, 1};
  const TokenWeightMap focused = dtr_weights(a, cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    const float best = std::max(all.w_hat(i, 0), all.w_hat(i, 1));
    for (std::size_t j = 0; j < 3; ++j) CHECK(focused.w_hat(i, j) == best);
  }
  cfg.target_text_indices = {3};
  CHECK_THROWS_AS(dtr_weights(a, cfg), std::out_of_range);
}

TEST_CASE("apply_dtr touches only the text->image block") {
  SeededRng rng(2);
  const std::size_t M = 3, N = 4, L = M + N;
  const JointAttentionMap map(softmax_rows(rng.uniform_matrix(L, L, -2, 2)), M);

  CHECK(bitwise_equal(apply_dtr(map, {Tensor::matrix(N, M, 1.0f)}).matrix(), map.matrix()));

  const JointAttentionMap half = apply_dtr(map, {Tensor::matrix(N, M, 0.5f)});
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) {
      const float expect = (i >= M && j < M) ? map.matrix()(i, j) * 0.5f : map.matrix()(i, j);
      CHECK(std::bit_cast<std::uint32_t>(half.matrix()(i, j)) == std::bit_cast<std::uint32_t>(expect));
    }

  for (int trial = 0; trial < 50; ++trial) {
    const Tensor w = rng.uniform_matrix(N, M, 0.1f, 2.0f);
    const JointAttentionMap out = apply_dtr(map, {w});
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j) {
        const float expect = (i >= M && j < M) ? w(i - M, j) * map.matrix()(i, j) : map.matrix()(i, j);
        REQUIRE(std::bit_cast<std::uint32_t>(out.matrix()(i, j)) == std::bit_cast<std::uint32_t>(expect));
      }
  }
  CHECK_THROWS_AS(apply_dtr(map, {Tensor::matrix(M, N, 1.0f)}), ShapeError);
}

TEST_CASE("residual text tokens") {
  SeededRng rng(3);
  const TokenSequence prev(rng.uniform_matrix(7, 4, -1, 1), 3);
  const TokenSequence cur(rng.uniform_matrix(7, 4, -1, 1), 3);
  DtrConfig cfg;

  cfg.lambda_res = 0.0;
  CHECK(bitwise_equal(residual_text_tokens(prev, cur, cfg).embeddings(), cur.embeddings()));

  cfg.lambda_res = 1.0;
  const TokenSequence doubled = residual_text_tokens(cur, cur, cfg);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(doubled.embeddings()(i, c) == 2.0f * cur.embeddings()(i, c));

  cfg.lambda_res = 0.5;
  const TokenSequence mixed = residual_text_tokens(prev, cur, cfg);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(mixed.embeddings()(i, c) == cur.embeddings()(i, c) + 0.5f * prev.embeddings()(i, c));
    }
  CHECK(bitwise_equal(mixed.image(), cur.image()));

  CHECK_THROWS_AS(residual_text_tokens(TokenSequence(rng.uniform_matrix(7, 4, -1, 1), 2), cur, cfg),
                  ShapeError);
}

TEST_CASE("text guidance mass") {
  const std::size_t M = 2, N = 6, L = M + N;
  HeadOutputs uniform;
  uniform.text_len = M;
  uniform.attention_maps = {Tensor::matrix(L, L, 1.0f / L), Tensor::matrix(L, L, 1.0f / L)};
  const std::vector<HeadOutputs> blocks{uniform, uniform, uniform};
  for (double m : text_guidance_mass(blocks)) CHECK(std::fabs(m - double(M) / L) < 1e-6);

  HeadOutputs image_only;
  image_only.text_len = M;
  Tensor a = Tensor::matrix(L, L);
  for (std::size_t i = 0; i < L; ++i) a(i, L - 1) = 1.0f;
  image_only.attention_maps = {a};
  CHECK(text_guidance_mass(std::vector<HeadOutputs>{image_only})[0] == 0.0);

  SeededRng rng(4);
  std::vector<HeadOutputs> random(3);
  for (auto& b : random) {
    b.text_len = M;
    for (int h = 0; h < 3; ++h) b.attention_maps.push_back(softmax_rows(rng.uniform_matrix(L, L, -3, 3)));
  }
  const auto mass = text_guidance_mass(random);
  for (std::size_t blk = 0; blk < 3; ++blk) {
    double sum = 0;
    for (const auto& map : random[blk].attention_maps) {
      const Tensor block = extract_text_to_image(JointAttentionMap(map, M));
      for (float v : block.values()) sum += v;
    }
    CHECK(std::fabs(mass[blk] - sum / (3.0 * N)) < 1e-9);
  }
  CHECK_THROWS(text_guidance_mass(std::vector<HeadOutputs>{}));
}

TEST_CASE("heatmap reshape") {
  std::vector<float> big(4096);
  SeededRng rng(5);
  double total = 0;
  for (float& v : big) total += (v = rng.uniform01());
  const Tensor grid = heatmap(big, 64, 64);
  CHECK(grid.dims() == std::vector<std::size_t>{64, 64});
  double grid_total = 0;
  for (float v : grid.values()) grid_total += v;
  CHECK(grid_total == total);

  const std::vector<float> four{1, 2, 3, 4};
  CHECK(bitwise_equal(heatmap(four, 2, 2), Tensor::from_rows({{1, 2}, {3, 4}})));

  std::vector<float> sixteen(16);
  for (float& v : sixteen) v = rng.uniform(-1, 1);
  const Tensor g = heatmap(sixteen, 4, 4);
  CHECK(std::vector<float>(g.values().begin(), g.values().end()) == sixteen);

  CHECK_THROWS_AS(heatmap(sixteen, 3, 5), ShapeError);
}

TEST_CASE("PGM and CSV rendering") {
  const Tensor g = Tensor::from_rows({{0.0f, 0.5f}, {1.0f, 0.25f}});
  CHECK(format_pgm(g) == "P2\n2 2\n255\n0 128\n255 64\n");
  CHECK(format_pgm(Tensor::matrix(2, 3, 0.7f)) == "P2\n3 2\n255\n0 0 0\n0 0 0\n");
  CHECK(format_csv(Tensor::from_rows({{0.1f, 2.0f}})) == "0.1,2\n");
  const Tensor levels = parse_pgm(format_pgm(g));
  CHECK(bitwise_equal(levels, Tensor::from_rows({{0, 128}, {255, 64}})));
}
