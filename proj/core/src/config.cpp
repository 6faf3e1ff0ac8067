#include "headrouter/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

namespace headrouter {

namespace {

using nlohmann::json;

void require_object(const json& j, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed,
                    std::string_view where) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get(const json& j, const char* key, std::string_view where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

std::size_t get_count(const json& j, const char* key, std::string_view where) {
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string(where) + "." + key + ": expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

IndexFilter parse_filter(const json& j, std::string_view where) {
  if (j.is_string()) {
    if (j.get<std::string>() != "all") throw ConfigError(std::string(where) + ": expected \"all\"");
    return std::nullopt;
  }
  if (!j.is_array()) throw ConfigError(std::string(where) + ": expected \"all\" or an index list");
  std::vector<std::size_t> out;
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(std::string(where) + ": indices must be non-negative integers");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

json filter_json(const IndexFilter& f) {
  if (!f) return "all";
  return *f;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

}  // namespace

ModelConfig parse_model_config(const json& j) {
  constexpr std::string_view where = "model";
  require_object(j, where);
  reject_unknown(j, {"blocks", "heads", "d_model", "d_head", "seed", "weights_dir"}, where);
  ModelConfig cfg;
  if (j.contains("blocks")) cfg.blocks = get_count(j, "blocks", where);
  if (j.contains("heads")) cfg.heads = get_count(j, "heads", where);
  if (j.contains("d_model")) cfg.d_model = get_count(j, "d_model", where);
  if (j.contains("d_head")) cfg.d_head = get_count(j, "d_head", where);
  if (j.contains("seed")) cfg.seed = get<std::uint64_t>(j, "seed", where);
  if (j.contains("weights_dir")) cfg.weights_dir = get<std::string>(j, "weights_dir", where);
  cfg.validate();
  return cfg;
}

json to_json(const ModelConfig& cfg) {
  json j = {{"blocks", cfg.blocks},
            {"heads", cfg.heads},
            {"d_model", cfg.d_model},
            {"d_head", cfg.d_head},
            {"seed", cfg.seed}};
  if (cfg.weights_dir) j["weights_dir"] = cfg.weights_dir->string();
  return j;
}

PipelineConfig parse_pipeline_config(const json& j, const std::filesystem::path& base_dir) {
  require_object(j, "config");
  reject_unknown(j,
                 {"model", "iarouter", "dtr", "steps", "seed", "source_prompt", "edit_prompt",
                  "text_len", "image_len", "latent", "heatmap_grid"},
                 "config");
  PipelineConfig cfg;
  if (j.contains("model")) {
    cfg.model = parse_model_config(j.at("model"));
    if (cfg.model.weights_dir) cfg.model.weights_dir = resolve(base_dir, cfg.model.weights_dir->string());
  }
  if (j.contains("iarouter")) {
    const json& r = j.at("iarouter");
    constexpr std::string_view where = "iarouter";
    require_object(r, where);
    reject_unknown(r, {"enabled", "gamma", "k", "delta", "aggregate", "blocks", "apply_steps"},
                   where);
    if (r.contains("enabled")) cfg.iarouter.enabled = get<bool>(r, "enabled", where);
    if (r.contains("gamma")) cfg.iarouter.params.gamma = get<double>(r, "gamma", where);
    if (r.contains("k")) cfg.iarouter.params.k = get<double>(r, "k", where);
    if (r.contains("delta")) cfg.iarouter.params.delta = get<double>(r, "delta", where);
    if (r.contains("aggregate")) {
      const auto mode = get<std::string>(r, "aggregate", where);
      if (mode == "per_step") {
        cfg.iarouter.aggregate = SimilarityAggregation::per_step;
      } else if (mode == "mean") {
        cfg.iarouter.aggregate = SimilarityAggregation::mean;
      } else {
        throw ConfigError("iarouter.aggregate: expected \"per_step\" or \"mean\"");
      }
    }
    if (r.contains("blocks")) cfg.iarouter.blocks = parse_filter(r.at("blocks"), "iarouter.blocks");
    if (r.contains("apply_steps")) {
      cfg.iarouter.apply_steps = parse_filter(r.at("apply_steps"), "iarouter.apply_steps");
    }
  }
  if (j.contains("dtr")) {
    const json& d = j.at("dtr");
    constexpr std::string_view where = "dtr";
    require_object(d, where);
    reject_unknown(d,
                   {"enabled", "alpha", "upsilon", "lambda_res", "target_text_indices", "blocks",
                    "apply_steps"},
                   where);
    if (d.contains("enabled")) cfg.dtr.enabled = get<bool>(d, "enabled", where);
    if (d.contains("alpha")) cfg.dtr.params.alpha = get<double>(d, "alpha", where);
    if (d.contains("upsilon")) cfg.dtr.params.upsilon = get<double>(d, "upsilon", where);
    if (d.contains("lambda_res")) cfg.dtr.params.lambda_res = get<double>(d, "lambda_res", where);
    if (d.contains("target_text_indices")) {
      auto idx = parse_filter(d.at("target_text_indices"), "dtr.target_text_indices");
      cfg.dtr.params.target_text_indices = idx.value_or(std::vector<std::size_t>{});
    }
    if (d.contains("blocks")) cfg.dtr.blocks = parse_filter(d.at("blocks"), "dtr.blocks");
    if (d.contains("apply_steps")) {
      cfg.dtr.apply_steps = parse_filter(d.at("apply_steps"), "dtr.apply_steps");
    }
  }
  if (j.contains("steps")) cfg.steps = get_count(j, "steps", "config");
  if (j.contains("seed")) cfg.seed = get<std::uint64_t>(j, "seed", "config");
  if (j.contains("source_prompt")) cfg.source_prompt = get<std::string>(j, "source_prompt", "config");
  if (j.contains("edit_prompt")) cfg.edit_prompt = get<std::string>(j, "edit_prompt", "config");
  if (j.contains("text_len")) cfg.text_len = get_count(j, "text_len", "config");
  if (j.contains("image_len")) cfg.image_len = get_count(j, "image_len", "config");
  if (j.contains("latent")) {
    const json& l = j.at("latent");
    require_object(l, "latent");
    reject_unknown(l, {"source", "path"}, "latent");
    const auto source = l.contains("source") ? get<std::string>(l, "source", "latent") : "synthetic";
    if (source == "file") {
      cfg.latent.file = resolve(base_dir, get<std::string>(l, "path", "latent"));
    } else if (source != "synthetic") {
      throw ConfigError("latent.source: expected \"synthetic\" or \"file\"");
    } else if (l.contains("path")) {
      throw ConfigError("latent.path: only valid with source \"file\"");
    }
  }
  if (j.contains("heatmap_grid")) {
    const json& g = j.at("heatmap_grid");
    if (!g.is_array() || g.size() != 2 || !g[0].is_number_integer() || !g[1].is_number_integer()) {
      throw ConfigError("heatmap_grid: expected [rows, cols]");
    }
    cfg.heatmap_grid = std::make_pair(g[0].get<std::size_t>(), g[1].get<std::size_t>());
  }
  cfg.validate();
  return cfg;
}

json to_json(const PipelineConfig& cfg) {
  json j;
  j["model"] = to_json(cfg.model);
  j["iarouter"] = {{"enabled", cfg.iarouter.enabled},
                   {"gamma", cfg.iarouter.params.gamma},
                   {"k", cfg.iarouter.params.k},
                   {"delta", cfg.iarouter.params.delta},
                   {"aggregate", cfg.iarouter.aggregate == SimilarityAggregation::mean ? "mean"
                                                                                     : "per_step"},
                   {"blocks", filter_json(cfg.iarouter.blocks)},
                   {"apply_steps", filter_json(cfg.iarouter.apply_steps)}};
  j["dtr"] = {{"enabled", cfg.dtr.enabled},
              {"alpha", cfg.dtr.params.alpha},
              {"upsilon", cfg.dtr.params.upsilon},
              {"lambda_res", cfg.dtr.params.lambda_res},
              {"target_text_indices", cfg.dtr.params.target_text_indices},
              {"blocks", filter_json(cfg.dtr.blocks)},
              {"apply_steps", filter_json(cfg.dtr.apply_steps)}};
  j["steps"] = cfg.steps;
  j["seed"] = cfg.seed;
  j["source_prompt"] = cfg.source_prompt;
  j["edit_prompt"] = cfg.edit_prompt;
  j["text_len"] = cfg.text_len;
  j["image_len"] = cfg.image_len;
  if (cfg.latent.file) {
    j["latent"] = {{"source", "file"}, {"path", cfg.latent.file->string()}};
  } else {
    j["latent"] = {{"source", "synthetic"}};
  }
  if (cfg.heatmap_grid) j["heatmap_grid"] = {cfg.heatmap_grid->first, cfg.heatmap_grid->second};
  return j;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace headrouter
