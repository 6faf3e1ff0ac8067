#pragma once

// Head-sensitivity probing over paired-prompt datasets, plus the head dropout
// and head swap interventions.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headrouter/joint_attention.hpp"

namespace headrouter {

struct SemanticCategory {
  std::string name;
  std::vector<std::string> words;
};

/// Exactly eight categories with pairwise-disjoint word sets of size >= 2.
/// `prompt_template` must contain the placeholders "{w}" and "{u}".
struct SemanticVocabulary {
  std::string prompt_template = "a {w} {u}";
  std::vector<SemanticCategory> categories;

  static constexpr std::size_t kCategoryCount = 8;

  void validate() const;
  std::string make_prompt(const std::string& w, const std::string& u) const;

  /// shape, color, texture, style, object, material, pose, background.
  static SemanticVocabulary builtin();
  static SemanticVocabulary from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct PromptPair {
  std::string p1;
  std::string p2;
  std::size_t category = 0;
  std::string category_name;
  std::string w1, w2;
  std::string u1, u2;

  friend bool operator==(const PromptPair&, const PromptPair&) = default;
};

nlohmann::json to_json(const PromptPair& p);
PromptPair prompt_pair_from_json(const nlohmann::json& j);

/// pairs_per_category pairs for every category, in category order. w1 != w2 are drawn
/// from the category's words, u1/u2 from the union of the other categories' words.
std::vector<PromptPair> build_dataset(const SemanticVocabulary& vocab,
                                      std::size_t pairs_per_category, std::uint64_t seed);

void write_dataset_jsonl(std::ostream& os, const std::vector<PromptPair>& pairs);
std::vector<PromptPair> read_dataset_jsonl(std::istream& is);

/// Whitespace tokens, truncated or padded with "<pad>" to text_len rows. Row r is
/// drawn uniform in [-1, 1) from
/// SeededRng(splitmix64(fnv1a64(token) ^ splitmix64(r ^ splitmix64(seed)))).
Tensor embed_prompt(const std::string& prompt, std::size_t d_model, std::size_t text_len,
                    std::uint64_t seed);

struct ProbeConfig {
  std::size_t text_len = 8;
  std::size_t image_len = 16;
  std::size_t steps = 1;  // stack applications; similarities averaged over (step, block)
  std::uint64_t seed = 0;

  void validate() const;
};

struct SensitivityProfile {
  std::vector<std::string> categories;
  std::size_t heads = 0;
  std::vector<std::vector<double>> scores;  // [category][head], each row min-max normalized
  std::vector<std::vector<double>> raw;     // [category][head], mean cosine similarity
  std::vector<std::size_t> pair_counts;     // per category
  std::uint64_t seed = 0;
};

/// Mean pair similarity for one prompt pair, per head, over every (step, block).
std::vector<double> pair_head_similarity(const Model& model, const PromptPair& pair,
                                         const ProbeConfig& cfg);

/// Per-category mean of pair similarities, then normalized dissimilarity per row.
/// The mean sums sorted values, so the result does not depend on dataset order.
SensitivityProfile profile_heads(const Model& model, const std::vector<PromptPair>& dataset,
                                 const ProbeConfig& cfg);

struct DropoutResult {
  Tensor baseline;  // input + attend(input)
  Tensor ablated;   // input + attend(input) with the head dropped
  std::vector<double> delta_norms;  // per token L2 of baseline - ablated
};

DropoutResult dropout_experiment(const BlockWeights& w, const TokenSequence& seq,
                                 std::size_t head);

void swap_head_features(HeadOutputs& a, HeadOutputs& b, std::size_t head);

struct SwapResult {
  Tensor a;  // input_a + output with head features from run b
  Tensor b;
};

SwapResult swap_experiment(const BlockWeights& w, const TokenSequence& seq_a,
                           const TokenSequence& seq_b, std::size_t head);

/// CSV "category,head,dissimilarity,raw_similarity" plus a categories x heads PGM.
void export_profile(const SensitivityProfile& p, const std::filesystem::path& csv_path,
                    const std::filesystem::path& pgm_path);
std::string format_profile_csv(const SensitivityProfile& p);
SensitivityProfile parse_profile_csv(const std::string& text);
Tensor profile_grid(const SensitivityProfile& p);

}  // namespace headrouter
