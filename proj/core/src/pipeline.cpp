#include "headrouter/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "headrouter/heatmap_io.hpp"
#include "headrouter/semantic_probe.hpp"
#include "headrouter/tensor_io.hpp"
#include "headrouter/toy_model.hpp"

namespace headrouter {

bool filter_allows(const IndexFilter& filter, std::size_t index) {
  return !filter || std::find(filter->begin(), filter->end(), index) != filter->end();
}

void PipelineConfig::validate() const {
  model.validate();
  if (steps == 0) throw ConfigError("steps must be >= 1");
  if (text_len == 0) throw ConfigError("text_len must be >= 1");
  if (image_len == 0 && !latent.file) throw ConfigError("image_len must be >= 1");
  auto nonblank = [](const std::string& s) {
    return s.find_first_not_of(" \t\r\n") != std::string::npos;
  };
  if (!nonblank(source_prompt)) throw ConfigError("source_prompt must be nonempty");
  if (!nonblank(edit_prompt)) throw ConfigError("edit_prompt must be nonempty");
  iarouter.params.validate();
  dtr.params.validate();
  for (std::size_t j : dtr.params.target_text_indices) {
    if (j >= text_len) throw ConfigError("dtr.target_text_indices: index outside text_len");
  }
  for (const auto* f : {&iarouter.blocks, &dtr.blocks}) {
    if (*f) {
      for (std::size_t b : **f) {
        if (b >= model.blocks) throw ConfigError("block index " + std::to_string(b) + " out of range");
      }
    }
  }
  if (heatmap_grid && heatmap_grid->first * heatmap_grid->second != image_len) {
    throw ConfigError("heatmap_grid does not cover image_len tokens");
  }
}

std::pair<std::size_t, std::size_t> PipelineConfig::grid() const {
  if (heatmap_grid) return *heatmap_grid;
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(image_len))));
  if (side * side == image_len) return {side, side};
  return {1, image_len};
}

namespace {

std::vector<double> to_doubles(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

PipelineConfig resolve_latent(PipelineConfig cfg) {
  if (cfg.latent.file) {
    const Tensor z = load_hrtf(*cfg.latent.file);
    if (z.rank() != 2 || z.cols() != cfg.model.d_model) {
      throw ShapeError("latent file has shape " + z.shape_string() + ", expected [N x " +
                       std::to_string(cfg.model.d_model) + "]");
    }
    cfg.image_len = z.rows();
  }
  cfg.validate();
  return cfg;
}

}  // namespace

nlohmann::json EditTrace::to_json() const {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json tw = nlohmann::json::array();
    for (const auto& s : r.token_weights) tw.push_back({{"min", s.min}, {"mean", s.mean}, {"max", s.max}});
    recs.push_back({{"step", r.step},
                    {"block", r.block},
                    {"similarities", r.similarities},
                    {"dissimilarity", r.dissimilarity},
                    {"router_applied", r.router_applied},
                    {"head_weights", r.head_weights},
                    {"dtr_applied", r.dtr_applied},
                    {"residual_applied", r.residual_applied},
                    {"token_weights", tw},
                    {"text_guidance_mass_edit", r.text_guidance_mass_edit},
                    {"text_guidance_mass_recon", r.text_guidance_mass_recon},
                    {"image_text_attention", r.image_text_attention}});
  }
  return {{"steps", steps},       {"blocks", blocks},       {"heads", heads},
          {"text_len", text_len}, {"image_len", image_len}, {"gamma", gamma},
          {"grid", {grid_rows, grid_cols}}, {"records", recs}};
}

EditTrace EditTrace::from_json(const nlohmann::json& j) {
  try {
    EditTrace t;
    t.steps = j.at("steps").get<std::size_t>();
    t.blocks = j.at("blocks").get<std::size_t>();
    t.heads = j.at("heads").get<std::size_t>();
    t.text_len = j.at("text_len").get<std::size_t>();
    t.image_len = j.at("image_len").get<std::size_t>();
    t.gamma = j.at("gamma").get<double>();
    t.grid_rows = j.at("grid").at(0).get<std::size_t>();
    t.grid_cols = j.at("grid").at(1).get<std::size_t>();
    for (const auto& r : j.at("records")) {
      TraceRecord rec;
      rec.step = r.at("step").get<std::size_t>();
      rec.block = r.at("block").get<std::size_t>();
      rec.similarities = to_doubles(r.at("similarities"));
      rec.dissimilarity = to_doubles(r.at("dissimilarity"));
      rec.router_applied = r.at("router_applied").get<bool>();
      rec.head_weights = to_doubles(r.at("head_weights"));
      rec.dtr_applied = r.at("dtr_applied").get<bool>();
      rec.residual_applied = r.at("residual_applied").get<bool>();
      for (const auto& s : r.at("token_weights")) {
        rec.token_weights.push_back(
            {s.at("min").get<double>(), s.at("mean").get<double>(), s.at("max").get<double>()});
      }
      rec.text_guidance_mass_edit = r.at("text_guidance_mass_edit").get<double>();
      rec.text_guidance_mass_recon = r.at("text_guidance_mass_recon").get<double>();
      rec.image_text_attention = r.at("image_text_attention").get<std::vector<float>>();
      t.records.push_back(std::move(rec));
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("trace: ") + e.what());
  }
}

EditPipeline::EditPipeline(PipelineConfig cfg) : cfg_(resolve_latent(std::move(cfg))) {
  model_ = make_model(cfg_.model);
}

EditPipeline::EditPipeline(PipelineConfig cfg, Model model)
    : cfg_(resolve_latent(std::move(cfg))), model_(std::move(model)) {
  if (model_.size() != cfg_.model.blocks) throw ConfigError("model block count differs from config");
  for (const auto& w : model_) {
    w.validate();
    if (w.heads != cfg_.model.heads || w.d_model != cfg_.model.d_model ||
        w.d_head != cfg_.model.d_head) {
      throw ConfigError("model weights differ from model config dimensions");
    }
  }
}

Tensor EditPipeline::source_text() const {
  return embed_prompt(cfg_.source_prompt, cfg_.model.d_model, cfg_.text_len, cfg_.seed);
}

Tensor EditPipeline::edit_text() const {
  return embed_prompt(cfg_.edit_prompt, cfg_.model.d_model, cfg_.text_len, cfg_.seed);
}

Tensor EditPipeline::initial_latent() const {
  if (cfg_.latent.file) return load_hrtf(*cfg_.latent.file);
  return synthetic_latent(cfg_.image_len, cfg_.model.d_model, cfg_.seed);
}

PipelineState EditPipeline::initial_state() const {
  PipelineState s;
  s.recon_latent = initial_latent();
  s.edit_latent = s.recon_latent;
  s.aggregator = SimilarityAggregator(cfg_.iarouter.aggregate);
  return s;
}

EditTrace EditPipeline::empty_trace() const {
  EditTrace t;
  t.steps = cfg_.steps;
  t.blocks = model_.size();
  t.heads = cfg_.model.heads;
  t.text_len = cfg_.text_len;
  t.image_len = cfg_.image_len;
  t.gamma = cfg_.iarouter.params.gamma;
  std::tie(t.grid_rows, t.grid_cols) = cfg_.grid();
  return t;
}

void EditPipeline::step(PipelineState& state, EditTrace& trace) const {
  if (state.next_step >= cfg_.steps) throw std::logic_error("pipeline: all steps already run");
  const std::size_t t = state.next_step;
  const Tensor src_text = source_text();
  const Tensor dst_text = edit_text();

  TokenSequence recon = TokenSequence::from_parts(src_text, state.recon_latent);
  TokenSequence edit = TokenSequence::from_parts(dst_text, state.edit_latent);
  std::optional<TokenSequence> edit_previous;

  for (std::size_t b = 0; b < model_.size(); ++b) {
    const BlockWeights& w = model_[b];
    TraceRecord rec;
    rec.step = t;
    rec.block = b;

    // Reconstruction: a plain residual block, identical to run_stack.
    AttendResult recon_attn = attend(recon, w);
    TokenSequence recon_next =
        recon.with_embeddings(add(recon.embeddings(), recon_attn.output.embeddings()));

    const bool dtr_on = cfg_.dtr.enabled && filter_allows(cfg_.dtr.blocks, b) &&
                        filter_allows(cfg_.dtr.apply_steps, t);
    const bool router_on = cfg_.iarouter.enabled && filter_allows(cfg_.iarouter.blocks, b) &&
                           filter_allows(cfg_.iarouter.apply_steps, t);

    TokenSequence edit_in = edit;
    if (dtr_on && edit_previous && cfg_.dtr.params.lambda_res > 0.0) {
      edit_in = residual_text_tokens(*edit_previous, edit, cfg_.dtr.params);
      rec.residual_applied = true;
    }

    AttentionMapHook map_hook;
    if (dtr_on) {
      map_hook = [&](std::size_t, const JointAttentionMap& map) {
        TokenWeightMap wm = dtr_weights(extract_text_to_image(map), cfg_.dtr.params);
        auto vals = wm.w_hat.values();
        const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
        double sum = 0.0;
        for (float v : vals) sum += v;
        rec.token_weights.push_back({*lo, sum / static_cast<double>(vals.size()), *hi});
        return apply_dtr(map, wm);
      };
      rec.dtr_applied = true;
    }
    HeadOutputs edit_heads = compute_heads(edit_in, w, map_hook);

    HeadSimilarities sims = head_similarities(recon_attn.heads, edit_heads);
    sims.block = b;
    sims.step = t;
    rec.similarities = sims.s;
    const HeadSimilarities routed = state.aggregator.update(sims);
    rec.dissimilarity = normalized_dissimilarity(routed.s);

    HeadHookSet hooks;
    if (router_on) {
      const HeadWeights hw = router_weights(rec.dissimilarity, cfg_.iarouter.params);
      hooks = apply_router(edit_heads, hw);
      rec.head_weights = hw.w;
      rec.router_applied = true;
    } else {
      rec.head_weights.assign(w.heads, 1.0);
    }
    const Tensor edit_attn = project_output(apply_head_hooks(edit_heads, hooks), w);
    TokenSequence edit_next = edit_in.with_embeddings(add(edit_in.embeddings(), edit_attn));

    const HeadOutputs* edit_blocks = &edit_heads;
    rec.text_guidance_mass_edit = text_guidance_mass(std::span(edit_blocks, 1)).front();
    const HeadOutputs* recon_blocks = &recon_attn.heads;
    rec.text_guidance_mass_recon = text_guidance_mass(std::span(recon_blocks, 1)).front();
    rec.image_text_attention =
        image_text_attention(edit_heads, cfg_.dtr.params.target_text_indices);

    trace.records.push_back(std::move(rec));
    edit_previous = std::move(edit_in);
    recon = std::move(recon_next);
    edit = std::move(edit_next);
  }

  state.recon_latent = latent_step(state.recon_latent, recon.image(), cfg_.steps);
  state.edit_latent = latent_step(state.edit_latent, edit.image(), cfg_.steps);
  state.recon_output = std::move(recon);
  state.edit_output = std::move(edit);
  ++state.next_step;
}

EditResult EditPipeline::run_edit() const {
  PipelineState state = initial_state();
  EditTrace trace = empty_trace();
  for (std::size_t t = 0; t < cfg_.steps; ++t) step(state, trace);
  return {*state.edit_output, *state.recon_output, std::move(trace)};
}

TokenSequence EditPipeline::run_reconstruction() const {
  const Tensor text = source_text();
  Tensor latent = initial_latent();
  std::optional<TokenSequence> out;
  for (std::size_t t = 0; t < cfg_.steps; ++t) {
    out = run_stack(TokenSequence::from_parts(text, latent), model_).output;
    latent = latent_step(latent, out->image(), cfg_.steps);
  }
  return *out;
}

void render_trace_heatmaps(const EditTrace& trace, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& r : trace.records) {
    const Tensor grid = heatmap(r.image_text_attention, trace.grid_rows, trace.grid_cols);
    const std::string stem =
        "heatmap_s" + std::to_string(r.step) + "_b" + std::to_string(r.block);
    write_pgm(dir / (stem + ".pgm"), grid);
    write_csv(dir / (stem + ".csv"), grid);
  }
}

void write_edit_outputs(const EditResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_hrtf(dir / "edited.hrtf", result.edited.embeddings());
  save_hrtf(dir / "recon.hrtf", result.reconstruction.embeddings());
  write_text_file(dir / "trace.json", result.trace.to_json().dump(2) + "\n");
  render_trace_heatmaps(result.trace, dir);
}

}  // namespace headrouter
