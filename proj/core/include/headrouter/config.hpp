#pragma once

// JSON configuration documents. Every object level rejects unknown keys.
//
// Pipeline document (all keys optional):
//   {
//     "model":    {"blocks": 2, "heads": 4, "d_model": 16, "d_head": 4, "seed": 0,
//                  "weights_dir": "<dir of HRTF files>"},
//     "iarouter": {"enabled": true, "gamma": 1.0, "k": 10.0, "delta": 0.5,
//                  "aggregate": "per_step" | "mean",
//                  "blocks": "all" | [..], "apply_steps": "all" | [..]},
//     "dtr":      {"enabled": true, "alpha": 2.0, "upsilon": 1.0, "lambda_res": 1.0,
//                  "target_text_indices": [..],
//                  "blocks": "all" | [..], "apply_steps": "all" | [..]},
//     "steps": 4, "seed": 0, "text_len": 8, "image_len": 16,
//     "source_prompt": "...", "edit_prompt": "...",
//     "latent": {"source": "synthetic"} | {"source": "file", "path": "z.hrtf"},
//     "heatmap_grid": [rows, cols]
//   }

#include <filesystem>

#include <nlohmann/json.hpp>

#include "headrouter/joint_attention.hpp"
#include "headrouter/pipeline.hpp"

namespace headrouter {

ModelConfig parse_model_config(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& cfg);

/// Relative paths (weights_dir, latent path) resolve against `base_dir`.
PipelineConfig parse_pipeline_config(const nlohmann::json& j,
                                     const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const PipelineConfig& cfg);

nlohmann::json load_json_file(const std::filesystem::path& path);

}  // namespace headrouter
