#pragma once

// Dual-token refinement: image-side reweighting of the text->image attention
// block and text-side residual carry-over between blocks.

#include <cstddef>
#include <span>
#include <vector>

#include "headrouter/joint_attention.hpp"

namespace headrouter {

struct DtrConfig {
  double alpha = 2.0;       // weight enhancement coefficient
  double upsilon = 1.0;     // amplitude adjustment
  double lambda_res = 1.0;  // residual text-token coefficient
  /// Empty means every text column keeps its own weight. Otherwise each image
  /// row uses the maximum weight over these columns, broadcast to all columns.
  std::vector<std::size_t> target_text_indices;

  void validate() const;
};

/// Per (image token i, text token j) weight, [N x M], entries in (0, alpha).
struct TokenWeightMap {
  Tensor w_hat;
};

/// For each text column j: softmax of A[:, j] over image rows, then
/// alpha * sigmoid(upsilon * p_ij).
TokenWeightMap dtr_weights(const Tensor& text_to_image, const DtrConfig& cfg);

/// Multiplies only the text->image block by w_hat; all other entries are copied.
JointAttentionMap apply_dtr(const JointAttentionMap& map, const TokenWeightMap& weights);

/// Text rows become current + lambda_res * previous; image rows are copied.
TokenSequence residual_text_tokens(const TokenSequence& previous, const TokenSequence& current,
                                   const DtrConfig& cfg);

/// Per block: mean over heads and image rows of the attention mass on text columns.
std::vector<double> text_guidance_mass(std::span<const HeadOutputs> blocks);

/// Per image token: mean over heads of the attention on the selected text
/// columns (all columns when `text_columns` is empty). Length N.
std::vector<float> image_text_attention(const HeadOutputs& heads,
                                        std::span<const std::size_t> text_columns = {});

/// Row-major reshape of N per-token weights into a rows x cols grid.
Tensor heatmap(std::span<const float> weights, std::size_t rows, std::size_t cols);

}  // namespace headrouter
