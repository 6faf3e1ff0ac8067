#include "headrouter/token_refinement.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace headrouter {

void DtrConfig::validate() const {
  if (!std::isfinite(alpha) || alpha <= 0.0) throw ConfigError("dtr: alpha must be > 0");
  if (!std::isfinite(upsilon) || upsilon <= 0.0) throw ConfigError("dtr: upsilon must be > 0");
  if (!std::isfinite(lambda_res) || lambda_res < 0.0) {
    throw ConfigError("dtr: lambda_res must be >= 0");
  }
}

TokenWeightMap dtr_weights(const Tensor& text_to_image, const DtrConfig& cfg) {
  cfg.validate();
  const std::size_t n = text_to_image.rows(), m = text_to_image.cols();
  Tensor w({n, m});
  std::vector<double> e(n);
  for (std::size_t j = 0; j < m; ++j) {
    double hi = text_to_image(0, j);
    for (std::size_t i = 1; i < n; ++i) hi = std::max(hi, static_cast<double>(text_to_image(i, j)));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      e[i] = std::exp(static_cast<double>(text_to_image(i, j)) - hi);
      sum += e[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      w(i, j) = static_cast<float>(cfg.alpha * sigmoid(cfg.upsilon * (e[i] / sum)));
    }
  }
  if (!cfg.target_text_indices.empty()) {
    for (std::size_t j : cfg.target_text_indices) {
      if (j >= m) {
        throw std::out_of_range("dtr: target text index " + std::to_string(j) +
                                " outside text length " + std::to_string(m));
      }
    }
    Tensor focused({n, m});
    for (std::size_t i = 0; i < n; ++i) {
      float best = 0.0f;
      for (std::size_t j : cfg.target_text_indices) best = std::max(best, w(i, j));
      for (std::size_t j = 0; j < m; ++j) focused(i, j) = best;
    }
    w = std::move(focused);
  }
  return {std::move(w)};
}

JointAttentionMap apply_dtr(const JointAttentionMap& map, const TokenWeightMap& weights) {
  const std::size_t m = map.text_len(), n = map.image_len();
  if (weights.w_hat.rank() != 2 || weights.w_hat.rows() != n || weights.w_hat.cols() != m) {
    throw ShapeError("apply_dtr: weight map " + weights.w_hat.shape_string() +
                     " does not match the " + std::to_string(n) + "x" + std::to_string(m) +
                     " text->image block");
  }
  JointAttentionMap out = map;
  Tensor& a = out.matrix();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) a(m + i, j) *= weights.w_hat(i, j);
  }
  return out;
}

TokenSequence residual_text_tokens(const TokenSequence& previous, const TokenSequence& current,
                                   const DtrConfig& cfg) {
  cfg.validate();
  if (!same_layout(previous, current)) {
    throw ShapeError("residual_text_tokens: sequences have different layouts");
  }
  if (cfg.lambda_res == 0.0) return current;
  Tensor out = current.embeddings();
  const float lambda = static_cast<float>(cfg.lambda_res);
  for (std::size_t i = 0; i < current.text_len(); ++i) {
    auto dst = out.row(i);
    auto prev = previous.embeddings().row(i);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += lambda * prev[c];
  }
  return current.with_embeddings(std::move(out));
}

std::vector<double> text_guidance_mass(std::span<const HeadOutputs> blocks) {
  if (blocks.empty()) throw std::invalid_argument("text_guidance_mass: no blocks recorded");
  std::vector<double> mass;
  mass.reserve(blocks.size());
  for (const HeadOutputs& block : blocks) {
    const std::size_t m = block.text_len;
    double total = 0.0;
    std::size_t rows = 0;
    for (const Tensor& a : block.attention_maps) {
      for (std::size_t i = m; i < a.rows(); ++i, ++rows) {
        double row_mass = 0.0;
        for (std::size_t j = 0; j < m; ++j) row_mass += a(i, j);
        total += row_mass;
      }
    }
    mass.push_back(rows ? total / static_cast<double>(rows) : 0.0);
  }
  return mass;
}

std::vector<float> image_text_attention(const HeadOutputs& heads,
                                        std::span<const std::size_t> text_columns) {
  if (heads.attention_maps.empty()) throw std::invalid_argument("image_text_attention: no heads");
  const std::size_t m = heads.text_len;
  const std::size_t n = heads.attention_maps.front().rows() - m;
  for (std::size_t j : text_columns) {
    if (j >= m) throw std::out_of_range("image_text_attention: text column out of range");
  }
  std::vector<double> acc(n, 0.0);
  for (const Tensor& a : heads.attention_maps) {
    for (std::size_t i = 0; i < n; ++i) {
      if (text_columns.empty()) {
        for (std::size_t j = 0; j < m; ++j) acc[i] += a(m + i, j);
      } else {
        for (std::size_t j : text_columns) acc[i] += a(m + i, j);
      }
    }
  }
  std::vector<float> out(n);
  const double h = static_cast<double>(heads.attention_maps.size());
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(acc[i] / h);
  return out;
}

Tensor heatmap(std::span<const float> weights, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0 || rows * cols != weights.size()) {
    throw ShapeError("heatmap: " + std::to_string(weights.size()) + " weights do not fill a " +
                     std::to_string(rows) + "x" + std::to_string(cols) + " grid");
  }
  return Tensor({rows, cols}, std::vector<float>(weights.begin(), weights.end()));
}

}  // namespace headrouter
