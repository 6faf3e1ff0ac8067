// headrouter command-line front end.
#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "headrouter/config.hpp"
#include "headrouter/heatmap_io.hpp"
#include "headrouter/pipeline.hpp"
#include "headrouter/semantic_probe.hpp"
#include "headrouter/token_refinement.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace headrouter;

namespace {

int run_edit_command(const fs::path& config_path, const fs::path& out) {
  const auto j = load_json_file(config_path);
  const PipelineConfig cfg = parse_pipeline_config(j, config_path.parent_path());
  const EditResult result = EditPipeline(cfg).run_edit();
  write_edit_outputs(result, out);
  std::cout << nlohmann::json{{"out", out.string()},
                              {"records", result.trace.records.size()},
                              {"image_len", result.trace.image_len}}
                   .dump()
            << "\n";
  return 0;
}

SemanticVocabulary load_vocab(const std::optional<fs::path>& path) {
  if (!path) return SemanticVocabulary::builtin();
  return SemanticVocabulary::from_json(load_json_file(*path));
}

std::vector<PromptPair> load_dataset(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return read_dataset_jsonl(is);
}

struct SelftestCheck {
  const char* name;
  std::function<bool()> run;
};

bool check_attention_oracle() {
  SeededRng rng(0x5e1f);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t heads = 1 + rng.index(4), dh = 1 + rng.index(4), d = 2 + rng.index(6);
    const std::size_t text = 1 + rng.index(4), image = 1 + rng.index(8);
    const BlockWeights w = oracle::random_block(rng, heads, d, dh);
    const TokenSequence s(rng.uniform_matrix(text + image, d, -1, 1), text);
    const auto naive = oracle::attention(s.embeddings(), text, w);
    if (oracle::max_abs_diff(naive.output, attend(s, w).output.embeddings()) >= 1e-5) return false;
  }
  return true;
}

bool check_router() {
  const RouterConfig cfg{1.0, 10.0, 0.5};
  const std::vector<double> d = normalized_dissimilarity(std::vector<double>{0.2, 0.5, 0.8});
  const auto w = router_weights(std::vector<double>{0.5, 0.0, 1.0}, cfg).w;
  return d[0] == 1.0 && d[2] == 0.0 && w[0] == 1.5 && std::fabs(w[1] - 1.0066929) < 1e-6 &&
         std::fabs(w[2] - 1.9933071) < 1e-6;
}

bool check_dtr() {
  DtrConfig cfg;
  const auto one = dtr_weights(Tensor::from_rows({{0.3f}}), cfg);
  const auto two = dtr_weights(Tensor::from_rows({{0.3f}, {0.3f}}), cfg);
  return std::fabs(one.w_hat(0, 0) - 1.4621172) < 1e-6 &&
         std::fabs(two.w_hat(0, 0) - 1.2449187) < 1e-6;
}

bool check_dataset() {
  const auto pairs = build_dataset(SemanticVocabulary::builtin(), 50, 1);
  if (pairs.size() != 400) return false;
  for (const auto& p : pairs) {
    if (p.w1 == p.w2) return false;
  }
  return true;
}

bool check_embedding() {
  return oracle::max_abs_diff(oracle::prompt_embedding("a red car", 16, 8, 3),
                              embed_prompt("a red car", 16, 8, 3)) == 0.0;
}

bool check_identity_fallback() {
  PipelineConfig cfg;
  cfg.steps = 2;
  cfg.iarouter.enabled = false;
  cfg.dtr.enabled = false;
  cfg.edit_prompt = cfg.source_prompt;
  const EditResult r = run_edit(cfg);
  return bitwise_equal(r.edited.embeddings(), r.reconstruction.embeddings());
}

int run_selftest() {
  const SelftestCheck checks[] = {
      {"attention_oracle", check_attention_oracle}, {"router", check_router},
      {"dtr", check_dtr},                           {"dataset", check_dataset},
      {"embedding", check_embedding},               {"identity_fallback", check_identity_fallback},
  };
  bool all = true;
  for (const auto& c : checks) {
    const bool ok = c.run();
    all = all && ok;
    std::cout << (ok ? "ok   " : "FAIL ") << c.name << "\n";
  }
  return all ? 0 : 1;
}

void print_error(const char* kind, const std::exception& e) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", e.what()}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Head routing and token refinement on a toy joint-attention stack"};
  app.require_subcommand(1);

  auto* edit = app.add_subcommand("edit", "Run the editing and reconstruction branches");
  fs::path edit_config, edit_out;
  edit->add_option("--config", edit_config, "Pipeline JSON config")->required();
  edit->add_option("--out", edit_out, "Output directory")->required();

  auto* probe = app.add_subcommand("probe", "Per-category head sensitivity profile");
  std::optional<fs::path> probe_model, probe_vocab, probe_dataset;
  std::size_t probe_pairs = 20;
  std::uint64_t probe_seed = 0;
  ProbeConfig probe_cfg;
  fs::path probe_out;
  probe->add_option("--model", probe_model, "Model JSON config (defaults if omitted)");
  probe->add_option("--vocab", probe_vocab, "Vocabulary JSON (built-in if omitted)");
  probe->add_option("--dataset", probe_dataset, "Prompt-pair JSONL (generated if omitted)");
  probe->add_option("--pairs-per-category", probe_pairs, "Pairs per category when generating");
  probe->add_option("--seed", probe_seed, "Dataset and embedding seed");
  probe->add_option("--steps", probe_cfg.steps, "Stack applications per pair");
  probe->add_option("--text-len", probe_cfg.text_len);
  probe->add_option("--image-len", probe_cfg.image_len);
  probe->add_option("--out", probe_out, "Output directory")->required();

  auto* gen = app.add_subcommand("gen-dataset", "Write a prompt-pair dataset as JSONL");
  std::optional<fs::path> gen_vocab;
  std::size_t gen_pairs = 500;
  std::uint64_t gen_seed = 0;
  fs::path gen_out;
  gen->add_option("--vocab", gen_vocab, "Vocabulary JSON (built-in if omitted)");
  gen->add_option("--pairs-per-category", gen_pairs);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out, "Output JSONL file")->required();

  auto* hm = app.add_subcommand("heatmap", "Render heatmaps from a trace.json");
  fs::path hm_trace, hm_out;
  hm->add_option("--trace", hm_trace)->required();
  hm->add_option("--out", hm_out, "Output directory")->required();

  auto* selftest = app.add_subcommand("selftest", "Check core routines against reference oracles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*edit) return run_edit_command(edit_config, edit_out);
    if (*probe) {
      ModelConfig model_cfg;
      if (probe_model) model_cfg = parse_model_config(load_json_file(*probe_model));
      probe_cfg.seed = probe_seed;
      const std::vector<PromptPair> dataset =
          probe_dataset ? load_dataset(*probe_dataset)
                        : build_dataset(load_vocab(probe_vocab), probe_pairs, probe_seed);
      const SensitivityProfile profile = profile_heads(make_model(model_cfg), dataset, probe_cfg);
      fs::create_directories(probe_out);
      export_profile(profile, probe_out / "profile.csv", probe_out / "profile.pgm");
      std::cout << nlohmann::json{{"out", probe_out.string()}, {"pairs", dataset.size()}}.dump()
                << "\n";
      return 0;
    }
    if (*gen) {
      const auto pairs = build_dataset(load_vocab(gen_vocab), gen_pairs, gen_seed);
      if (gen_out.has_parent_path()) fs::create_directories(gen_out.parent_path());
      std::ofstream os(gen_out, std::ios::binary);
      if (!os) throw IoError("cannot write " + gen_out.string());
      write_dataset_jsonl(os, pairs);
      if (!os) throw IoError("write failed: " + gen_out.string());
      return 0;
    }
    if (*hm) {
      render_trace_heatmaps(EditTrace::from_json(load_json_file(hm_trace)), hm_out);
      return 0;
    }
    if (*selftest) return run_selftest();
  } catch (const std::invalid_argument& e) {
    print_error("validation", e);
    return 1;
  } catch (const std::logic_error& e) {
    print_error("validation", e);
    return 1;
  } catch (const std::exception& e) {
    print_error("runtime", e);
    return 2;
  }
  return 0;
}
