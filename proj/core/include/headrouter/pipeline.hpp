#pragma once

// Two-branch editing pipeline over the toy stack. The reconstruction branch runs
// hook-free on the source prompt; the editing branch runs on the edit prompt with
// head routing and dual-token refinement driven by the reconstruction branch.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headrouter/head_router.hpp"
#include "headrouter/joint_attention.hpp"
#include "headrouter/token_refinement.hpp"

namespace headrouter {

/// Empty means "all".
using IndexFilter = std::optional<std::vector<std::size_t>>;

bool filter_allows(const IndexFilter& filter, std::size_t index);

struct RouterSettings {
  bool enabled = true;
  RouterConfig params;
  SimilarityAggregation aggregate = SimilarityAggregation::per_step;
  IndexFilter blocks;
  IndexFilter apply_steps;
};

struct DtrSettings {
  bool enabled = true;
  DtrConfig params;
  IndexFilter blocks;
  IndexFilter apply_steps;
};

struct LatentSource {
  std::optional<std::filesystem::path> file;  // HRTF [image_len x d_model]; synthetic if unset
};

struct PipelineConfig {
  ModelConfig model;
  RouterSettings iarouter;
  DtrSettings dtr;
  std::size_t steps = 4;
  std::uint64_t seed = 0;
  std::string source_prompt = "a red car";
  std::string edit_prompt = "a blue car";
  std::size_t text_len = 8;
  std::size_t image_len = 16;
  LatentSource latent;
  std::optional<std::pair<std::size_t, std::size_t>> heatmap_grid;

  void validate() const;
  /// heatmap_grid if set, else sqrt x sqrt for square image_len, else 1 x image_len.
  std::pair<std::size_t, std::size_t> grid() const;
};

struct WeightSummary {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct TraceRecord {
  std::size_t step = 0;
  std::size_t block = 0;
  std::vector<double> similarities;   // raw s_h at this (step, block)
  std::vector<double> dissimilarity;  // from the (possibly aggregated) similarities
  bool router_applied = false;
  std::vector<double> head_weights;  // all 1 when the router is not applied
  bool dtr_applied = false;
  bool residual_applied = false;
  std::vector<WeightSummary> token_weights;  // per head; empty when DTR is off
  double text_guidance_mass_edit = 0.0;
  double text_guidance_mass_recon = 0.0;
  std::vector<float> image_text_attention;  // editing branch, length image_len
};

struct EditTrace {
  std::size_t steps = 0;
  std::size_t blocks = 0;
  std::size_t heads = 0;
  std::size_t text_len = 0;
  std::size_t image_len = 0;
  double gamma = 0.0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::vector<TraceRecord> records;

  nlohmann::json to_json() const;
  static EditTrace from_json(const nlohmann::json& j);
};

struct PipelineState {
  Tensor recon_latent;
  Tensor edit_latent;
  std::size_t next_step = 0;
  SimilarityAggregator aggregator{SimilarityAggregation::per_step};
  std::optional<TokenSequence> recon_output;
  std::optional<TokenSequence> edit_output;
};

struct EditResult {
  TokenSequence edited;
  TokenSequence reconstruction;
  EditTrace trace;
};

class EditPipeline {
 public:
  explicit EditPipeline(PipelineConfig cfg);
  EditPipeline(PipelineConfig cfg, Model model);

  const PipelineConfig& config() const noexcept { return cfg_; }
  const Model& model() const noexcept { return model_; }

  Tensor source_text() const;
  Tensor edit_text() const;
  Tensor initial_latent() const;

  PipelineState initial_state() const;
  EditTrace empty_trace() const;
  /// Advances both branches by one denoising step, appending one record per block.
  void step(PipelineState& state, EditTrace& trace) const;

  EditResult run_edit() const;
  TokenSequence run_reconstruction() const;

 private:
  PipelineConfig cfg_;
  Model model_;
};

inline EditResult run_edit(const PipelineConfig& cfg) { return EditPipeline(cfg).run_edit(); }
inline TokenSequence run_reconstruction(const PipelineConfig& cfg) {
  return EditPipeline(cfg).run_reconstruction();
}

/// Writes heatmap_s<step>_b<block>.{pgm,csv} for every trace record.
void render_trace_heatmaps(const EditTrace& trace, const std::filesystem::path& dir);

/// edited.hrtf, recon.hrtf, trace.json and the trace heatmaps.
void write_edit_outputs(const EditResult& result, const std::filesystem::path& dir);

}  // namespace headrouter
