#include <doctest.h>

#include <filesystem>

#include "headrouter/config.hpp"
#include "headrouter/pipeline.hpp"
#include "headrouter/semantic_probe.hpp"
#include "headrouter/tensor_io.hpp"
#include "headrouter/toy_model.hpp"

using namespace headrouter;

namespace {

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.model.blocks = 2;
  cfg.model.heads = 4;
  cfg.model.d_model = 8;
  cfg.model.d_head = 2;
  cfg.model.seed = 5;
  cfg.steps = 3;
  cfg.seed = 11;
  cfg.text_len = 4;
  cfg.image_len = 9;
  return cfg;
}

}  // namespace

TEST_CASE("identity fallback reproduces reconstruction") {
  PipelineConfig cfg = small_config();
  cfg.iarouter.enabled = false;
  cfg.dtr.enabled = false;
  cfg.edit_prompt = cfg.source_prompt;
  const EditResult r = run_edit(cfg);
  CHECK(bitwise_equal(r.edited.embeddings(), r.reconstruction.embeddings()));
  for (const auto& rec : r.trace.records) {
    CHECK(!rec.router_applied);
    CHECK(!rec.dtr_applied);
    for (double w : rec.head_weights) CHECK(w == 1.0);
    for (double s : rec.similarities) CHECK(s == 1.0);
  }

  // Same prompts, modules on: DTR alone already moves the editing branch.
  cfg.iarouter.enabled = true;
  cfg.dtr.enabled = true;
  const EditResult on = run_edit(cfg);
  CHECK(!bitwise_equal(on.edited.embeddings(), on.reconstruction.embeddings()));
}

TEST_CASE("dtr residual off with lambda = 0") {
  PipelineConfig cfg = small_config();
  cfg.dtr.params.lambda_res = 0.0;
  for (const auto& rec : run_edit(cfg).trace.records) CHECK(!rec.residual_applied);
  cfg.dtr.params.lambda_res = 1.0;
  const auto recs = run_edit(cfg).trace.records;
  for (const auto& rec : recs) CHECK(rec.residual_applied == (rec.block > 0));
}

TEST_CASE("run_edit equals manual stepping") {
  const EditPipeline p(small_config());
  PipelineState state = p.initial_state();
  EditTrace trace = p.empty_trace();
  for (int t = 0; t < 3; ++t) p.step(state, trace);
  CHECK_THROWS_AS(p.step(state, trace), std::logic_error);
  const EditResult r = p.run_edit();
  CHECK(bitwise_equal(r.edited.embeddings(), state.edit_output->embeddings()));
  CHECK(bitwise_equal(r.reconstruction.embeddings(), state.recon_output->embeddings()));
  CHECK(r.trace.to_json() == trace.to_json());
}

TEST_CASE("trace contents") {
  PipelineConfig cfg = small_config();
  cfg.iarouter.params.gamma = 0.7;
  const EditResult r = run_edit(cfg);
  REQUIRE(r.trace.records.size() == 6);
  CHECK(r.trace.grid_rows == 3);
  CHECK(r.trace.grid_cols == 3);
  for (std::size_t i = 0; i < r.trace.records.size(); ++i) {
    const TraceRecord& rec = r.trace.records[i];
    CHECK(rec.step == i / 2);
    CHECK(rec.block == i % 2);
    CHECK(rec.router_applied);
    REQUIRE(rec.head_weights.size() == 4);
    for (double w : rec.head_weights) {
      CHECK(w > 1.0);
      CHECK(w < 1.7);
    }
    REQUIRE(rec.token_weights.size() == 4);
    for (const auto& s : rec.token_weights) {
      CHECK(s.min > 0.0);
      CHECK(s.min <= s.mean);
      CHECK(s.mean <= s.max);
      CHECK(s.max < cfg.dtr.params.alpha);
    }
    CHECK(rec.image_text_attention.size() == 9);
    CHECK(rec.text_guidance_mass_edit > 0.0);
    CHECK(rec.text_guidance_mass_recon < 1.0);
  }
  CHECK(EditTrace::from_json(r.trace.to_json()).to_json() == r.trace.to_json());
}

TEST_CASE("block and step filters") {
  PipelineConfig cfg = small_config();
  cfg.iarouter.blocks = std::vector<std::size_t>{1};
  cfg.dtr.apply_steps = std::vector<std::size_t>{0, 2};
  for (const auto& rec : run_edit(cfg).trace.records) {
    CHECK(rec.router_applied == (rec.block == 1));
    CHECK(rec.dtr_applied == (rec.step != 1));
  }
}

TEST_CASE("reconstruction") {
  PipelineConfig cfg = small_config();
  const TokenSequence rec = run_reconstruction(cfg);
  CHECK(bitwise_equal(rec.embeddings(), run_edit(cfg).reconstruction.embeddings()));
  cfg.edit_prompt = "a green boat";
  CHECK(bitwise_equal(rec.embeddings(), run_edit(cfg).reconstruction.embeddings()));
  CHECK(bitwise_equal(rec.embeddings(), run_reconstruction(cfg).embeddings()));

  cfg.steps = 1;
  const EditPipeline p(cfg);
  const TokenSequence once = p.run_reconstruction();
  const Tensor text = embed_prompt(cfg.source_prompt, 8, 4, cfg.seed);
  const StackResult direct =
      run_stack(TokenSequence::from_parts(text, synthetic_latent(9, 8, cfg.seed)), p.model());
  CHECK(bitwise_equal(once.embeddings(), direct.output.embeddings()));
}

TEST_CASE("mean aggregation changes routing only after the first step") {
  PipelineConfig cfg = small_config();
  const EditResult per = run_edit(cfg);
  cfg.iarouter.aggregate = SimilarityAggregation::mean;
  const EditResult mean = run_edit(cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(per.trace.records[i].head_weights == mean.trace.records[i].head_weights);
  }
  CHECK(per.trace.records[4].dissimilarity != mean.trace.records[4].dissimilarity);
}

TEST_CASE("latent file source") {
  const auto dir = std::filesystem::temp_directory_path() / "headrouter_latent_test";
  std::filesystem::create_directories(dir);
  const Tensor z = synthetic_latent(6, 8, 99);
  save_hrtf(dir / "z.hrtf", z);
  PipelineConfig cfg = small_config();
  cfg.latent.file = dir / "z.hrtf";
  const EditPipeline p(cfg);
  CHECK(p.config().image_len == 6);
  CHECK(bitwise_equal(p.initial_latent(), z));
  CHECK(p.config().grid() == std::pair<std::size_t, std::size_t>{1, 6});

  save_hrtf(dir / "bad.hrtf", synthetic_latent(6, 5, 1));
  cfg.latent.file = dir / "bad.hrtf";
  CHECK_THROWS_AS(EditPipeline{cfg}, ShapeError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config parsing") {
  using nlohmann::json;
  const json good = json::parse(R"({
    "model": {"blocks": 2, "heads": 4, "d_model": 8, "d_head": 2, "seed": 5},
    "iarouter": {"gamma": 0.5, "k": 8, "delta": 0.4, "aggregate": "mean", "blocks": [0]},
    "dtr": {"alpha": 1.5, "upsilon": 2, "lambda_res": 0.25, "target_text_indices": [1, 2],
            "apply_steps": "all"},
    "steps": 3, "seed": 11, "source_prompt": "a cat", "edit_prompt": "a dog",
    "text_len": 4, "image_len": 9, "heatmap_grid": [3, 3]
  })");
  const PipelineConfig cfg = parse_pipeline_config(good, {});
  CHECK(cfg.iarouter.params.gamma == 0.5);
  CHECK(cfg.iarouter.aggregate == SimilarityAggregation::mean);
  CHECK(cfg.iarouter.blocks == std::vector<std::size_t>{0});
  CHECK(!cfg.dtr.apply_steps);
  CHECK(cfg.dtr.params.target_text_indices == std::vector<std::size_t>{1, 2});
  CHECK(parse_pipeline_config(to_json(cfg), {}).iarouter.params.k == 8.0);
  CHECK(to_json(parse_pipeline_config(to_json(cfg), {})) == to_json(cfg));

  auto with = [&](const char* pointer, json value) {
    json j = good;
    j[json::json_pointer(pointer)] = std::move(value);
    return j;
  };
  CHECK_THROWS_AS(parse_pipeline_config(with("/bogus", 1), {}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/iarouter/bogus", 1), {}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/model/bogus", 1), {}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/steps", 0), {}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/steps", -2), {}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/iarouter/gamma", 0), {}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/iarouter/aggregate", "max"), {}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/dtr/alpha", -1), {}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/dtr/target_text_indices", json{7}), {}),
                  ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/heatmap_grid", json{2, 2}), {}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/edit_prompt", " "), {}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/iarouter/blocks", json{2}), {}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(with("/model/d_head", "x"), {}), ConfigError);
}

TEST_CASE("outputs on disk") {
  const auto dir = std::filesystem::temp_directory_path() / "headrouter_outputs_test";
  std::filesystem::remove_all(dir);
  const EditResult r = run_edit(small_config());
  write_edit_outputs(r, dir);
  CHECK(bitwise_equal(load_hrtf(dir / "edited.hrtf"), r.edited.embeddings()));
  CHECK(bitwise_equal(load_hrtf(dir / "recon.hrtf"), r.reconstruction.embeddings()));
  CHECK(std::filesystem::exists(dir / "heatmap_s2_b1.pgm"));
  CHECK(std::filesystem::exists(dir / "heatmap_s0_b0.csv"));
  const EditTrace back = EditTrace::from_json(load_json_file(dir / "trace.json"));
  CHECK(back.to_json() == r.trace.to_json());
  std::filesystem::remove_all(dir);
}
