#pragma once

// Joint text+image self-attention for a toy MM-DiT, with per-head
// interception points used by the router, refinement and probe modules.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "headrouter/tensor.hpp"

namespace headrouter {

/// Text tokens first (rows [0, M)), then image tokens (rows [M, M+N)).
class TokenSequence {
 public:
  TokenSequence(Tensor embeddings, std::size_t text_len);
  static TokenSequence from_parts(const Tensor& text, const Tensor& image);

  const Tensor& embeddings() const noexcept { return embeddings_; }
  std::size_t text_len() const noexcept { return text_len_; }
  std::size_t image_len() const noexcept { return embeddings_.rows() - text_len_; }
  std::size_t length() const noexcept { return embeddings_.rows(); }
  std::size_t d_model() const noexcept { return embeddings_.cols(); }

  Tensor text() const { return slice_rows(embeddings_, 0, text_len_); }
  Tensor image() const { return slice_rows(embeddings_, text_len_, length()); }

  /// Same boundary, new payload; throws ShapeError if the shape changes.
  TokenSequence with_embeddings(Tensor embeddings) const;

 private:
  Tensor embeddings_;
  std::size_t text_len_;
};

bool same_layout(const TokenSequence& a, const TokenSequence& b) noexcept;

/// Per-head projections for one modality path, each [d_model x d_head].
struct PathProjections {
  std::vector<Tensor> query;
  std::vector<Tensor> key;
  std::vector<Tensor> value;
};

struct BlockWeights {
  std::size_t heads = 0;
  std::size_t d_model = 0;
  std::size_t d_head = 0;
  PathProjections image;
  PathProjections text;
  Tensor output;  // W^o, [(heads * d_head) x d_model]

  void validate() const;

  static BlockWeights zeros(std::size_t heads, std::size_t d_model, std::size_t d_head);
  /// Every per-head projection is the identity (requires d_head == d_model)
  /// and W^o stacks identities, so a single head passes V straight through.
  static BlockWeights identity(std::size_t heads, std::size_t d_model);
};

struct ModelConfig {
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t d_model = 16;
  std::size_t d_head = 4;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> weights_dir;

  void validate() const;
};

using Model = std::vector<BlockWeights>;

/// Seeded toy weights. Block b draws from SeededRng(splitmix64(seed ^ splitmix64(b))) in
/// the order: image Q,K,V per head, text Q,K,V per head, then W^o. Projections are
/// uniform in +-1/sqrt(d_model); W^o is uniform in +-1/sqrt(heads * d_head).
BlockWeights random_block(const ModelConfig& cfg, std::size_t block_index);
Model make_model(const ModelConfig& cfg);

/// Files per block: block<b>.<img|txt>_<q|k|v>.hrtf as [heads x d_model x d_head]
/// and block<b>.out.hrtf as [(heads*d_head) x d_model].
void save_model(const Model& model, const std::filesystem::path& dir);
Model load_model(const ModelConfig& cfg, const std::filesystem::path& dir);

/// Full post-softmax map with the text/image boundary recorded.
class JointAttentionMap {
 public:
  JointAttentionMap(Tensor matrix, std::size_t text_len);

  const Tensor& matrix() const noexcept { return matrix_; }
  Tensor& matrix() noexcept { return matrix_; }
  std::size_t text_len() const noexcept { return text_len_; }
  std::size_t image_len() const noexcept { return matrix_.rows() - text_len_; }

 private:
  Tensor matrix_;
  std::size_t text_len_;
};

/// Image-query rows x text-key columns: rows [M, M+N), columns [0, M).
Tensor extract_text_to_image(const JointAttentionMap& map);

struct QkvProjection {
  Tensor query;  // [L x (heads*d_head)], head h in columns [h*d_head, (h+1)*d_head)
  Tensor key;
  Tensor value;
};

QkvProjection project_qkv(const TokenSequence& seq, const BlockWeights& w);

/// Called once per head with the raw softmax map; the returned map is what
/// multiplies V. Used for attention reweighting on the editing branch.
using AttentionMapHook = std::function<JointAttentionMap(std::size_t head, const JointAttentionMap&)>;

struct HeadHook {
  std::optional<double> scale;
  bool drop = false;
  std::optional<Tensor> replacement;
};

/// Interventions on per-head features v_h, applied before concatenation and W^o
/// in the fixed order scale -> drop -> replace. Head indices are 0-based.
class HeadHookSet {
 public:
  HeadHookSet& scale(std::size_t head, double factor);
  HeadHookSet& drop(std::size_t head);
  HeadHookSet& replace(std::size_t head, Tensor features);
  HeadHookSet& on_attention_map(AttentionMapHook hook);

  const std::map<std::size_t, HeadHook>& heads() const noexcept { return hooks_; }
  const AttentionMapHook& map_hook() const noexcept { return map_hook_; }
  bool empty() const noexcept { return hooks_.empty() && !map_hook_; }

  /// Throws std::out_of_range for a head index >= head_count.
  void validate(std::size_t head_count) const;

 private:
  std::map<std::size_t, HeadHook> hooks_;
  AttentionMapHook map_hook_;
};

struct HeadOutputs {
  std::vector<Tensor> per_head;        // v_h, [L x d_head], before feature hooks
  std::vector<Tensor> attention_maps;  // A_h, [L x L], raw softmax (before any map hook)
  std::size_t text_len = 0;

  std::size_t heads() const noexcept { return per_head.size(); }
};

/// Per-head attention. v_h is computed from the map returned by the map hook if one is set.
HeadOutputs compute_heads(const TokenSequence& seq, const BlockWeights& w,
                          const AttentionMapHook& map_hook = {});

/// v_h after scale/drop/replace hooks.
std::vector<Tensor> apply_head_hooks(const HeadOutputs& heads, const HeadHookSet& hooks);

/// Concat(features) * W^o, [L x d_model].
Tensor project_output(std::span<const Tensor> features, const BlockWeights& w);

struct AttendResult {
  TokenSequence output;  // attention output only, no residual
  HeadOutputs heads;
};

AttendResult attend(const TokenSequence& seq, const BlockWeights& w, const HeadHookSet& hooks = {});

/// Transforms a block's input before it runs; `previous` is the input consumed by
/// the previous block (null for block 0).
using BlockInputTransform = std::function<TokenSequence(
    std::size_t block, const TokenSequence* previous, const TokenSequence& current)>;

struct StackResult {
  TokenSequence output;
  std::vector<HeadOutputs> heads;  // one per block
};

/// Applies blocks in order with output = input + attend(input). `hooks` is either
/// empty or holds one hook set per block.
StackResult run_stack(const TokenSequence& seq, const Model& model,
                      std::span<const HeadHookSet> hooks = {},
                      const BlockInputTransform& input_transform = {});

}  // namespace headrouter
