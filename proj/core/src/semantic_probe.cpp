#include "headrouter/semantic_probe.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "headrouter/head_router.hpp"
#include "headrouter/heatmap_io.hpp"
#include "headrouter/rng.hpp"
#include "headrouter/tensor_io.hpp"
#include "headrouter/toy_model.hpp"

namespace headrouter {

void SemanticVocabulary::validate() const {
  if (categories.size() != kCategoryCount) {
    throw ConfigError("vocabulary: expected " + std::to_string(kCategoryCount) +
                      " categories, got " + std::to_string(categories.size()));
  }
  if (prompt_template.find("{w}") == std::string::npos ||
      prompt_template.find("{u}") == std::string::npos) {
    throw ConfigError("vocabulary: template needs {w} and {u} placeholders");
  }
  std::set<std::string> names;
  std::set<std::string> seen;
  for (const auto& c : categories) {
    if (c.name.empty() || c.name.find_first_of(",\n\"") != std::string::npos) {
      throw ConfigError("vocabulary: bad category name '" + c.name + "'");
    }
    if (!names.insert(c.name).second) throw ConfigError("vocabulary: duplicate category " + c.name);
    if (c.words.size() < 2) {
      throw ConfigError("vocabulary: category '" + c.name + "' needs at least two words");
    }
    for (const auto& w : c.words) {
      if (w.empty()) throw ConfigError("vocabulary: empty word in '" + c.name + "'");
      if (!seen.insert(w).second) {
        throw ConfigError("vocabulary: word '" + w + "' appears in more than one category");
      }
    }
  }
}

std::string SemanticVocabulary::make_prompt(const std::string& w, const std::string& u) const {
  std::string out;
  for (std::size_t i = 0; i < prompt_template.size();) {
    if (prompt_template.compare(i, 3, "{w}") == 0) {
      out += w;
      i += 3;
    } else if (prompt_template.compare(i, 3, "{u}") == 0) {
      out += u;
      i += 3;
    } else {
      out += prompt_template[i++];
    }
  }
  return out;
}

SemanticVocabulary SemanticVocabulary::builtin() {
  // Shape, color, texture and style follow the usual editing benchmarks; the
  // other four are stand-ins and can be replaced via --vocab.
  SemanticVocabulary v;
  v.categories = {
      {"shape", {"round", "square", "triangular", "oval", "hexagonal", "spiral"}},
      {"color", {"red", "blue", "green", "yellow", "purple", "orange"}},
      {"texture", {"furry", "smooth", "rough", "striped", "spotted", "fluffy"}},
      {"style", {"watercolor", "cartoon", "sketch", "origami", "pixelated", "impressionist"}},
      {"object", {"cat", "dog", "car", "apple", "house", "bicycle"}},
      {"material", {"wooden", "metallic", "glass", "paper", "stone", "plastic"}},
      {"pose", {"sitting", "running", "jumping", "sleeping", "standing", "flying"}},
      {"background", {"beach", "forest", "desert", "city", "snowfield", "ocean"}},
  };
  return v;
}

SemanticVocabulary SemanticVocabulary::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("vocabulary: expected a JSON object");
  SemanticVocabulary v;
  v.prompt_template.clear();
  for (const auto& [key, value] : j.items()) {
    if (key == "template") {
      v.prompt_template = value.get<std::string>();
    } else if (key == "categories") {
      for (const auto& c : value) {
        SemanticCategory cat;
        for (const auto& [ck, cv] : c.items()) {
          if (ck == "name") {
            cat.name = cv.get<std::string>();
          } else if (ck == "words") {
            cat.words = cv.get<std::vector<std::string>>();
          } else {
            throw ConfigError("vocabulary: unknown category key '" + ck + "'");
          }
        }
        v.categories.push_back(std::move(cat));
      }
    } else {
      throw ConfigError("vocabulary: unknown key '" + key + "'");
    }
  }
  if (v.prompt_template.empty()) v.prompt_template = "a {w} {u}";
  v.validate();
  return v;
}

nlohmann::json SemanticVocabulary::to_json() const {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : categories) cats.push_back({{"name", c.name}, {"words", c.words}});
  return {{"template", prompt_template}, {"categories", cats}};
}

nlohmann::json to_json(const PromptPair& p) {
  return {{"category", p.category_name}, {"category_index", p.category},
          {"p1", p.p1},                  {"p2", p.p2},
          {"w1", p.w1},                  {"w2", p.w2},
          {"u1", p.u1},                  {"u2", p.u2}};
}

PromptPair prompt_pair_from_json(const nlohmann::json& j) {
  PromptPair p;
  p.category_name = j.at("category").get<std::string>();
  p.category = j.at("category_index").get<std::size_t>();
  p.p1 = j.at("p1").get<std::string>();
  p.p2 = j.at("p2").get<std::string>();
  p.w1 = j.at("w1").get<std::string>();
  p.w2 = j.at("w2").get<std::string>();
  p.u1 = j.at("u1").get<std::string>();
  p.u2 = j.at("u2").get<std::string>();
  return p;
}

std::vector<PromptPair> build_dataset(const SemanticVocabulary& vocab,
                                      std::size_t pairs_per_category, std::uint64_t seed) {
  vocab.validate();
  if (pairs_per_category == 0) throw ConfigError("build_dataset: pairs_per_category must be >= 1");
  SeededRng rng(splitmix64(seed));
  std::vector<PromptPair> pairs;
  pairs.reserve(pairs_per_category * vocab.categories.size());
  for (std::size_t s = 0; s < vocab.categories.size(); ++s) {
    const auto& words = vocab.categories[s].words;
    std::vector<std::string> others;
    for (std::size_t o = 0; o < vocab.categories.size(); ++o) {
      if (o == s) continue;
      others.insert(others.end(), vocab.categories[o].words.begin(),
                    vocab.categories[o].words.end());
    }
    for (std::size_t n = 0; n < pairs_per_category; ++n) {
      const std::size_t i1 = rng.index(words.size());
      std::size_t i2 = rng.index(words.size() - 1);
      if (i2 >= i1) ++i2;
      PromptPair p;
      p.category = s;
      p.category_name = vocab.categories[s].name;
      p.w1 = words[i1];
      p.w2 = words[i2];
      p.u1 = others[rng.index(others.size())];
      p.u2 = others[rng.index(others.size())];
      p.p1 = vocab.make_prompt(p.w1, p.u1);
      p.p2 = vocab.make_prompt(p.w2, p.u2);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

void write_dataset_jsonl(std::ostream& os, const std::vector<PromptPair>& pairs) {
  for (const auto& p : pairs) os << to_json(p).dump() << '\n';
  if (!os) throw IoError("write_dataset_jsonl: write failed");
}

std::vector<PromptPair> read_dataset_jsonl(std::istream& is) {
  std::vector<PromptPair> pairs;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    pairs.push_back(prompt_pair_from_json(nlohmann::json::parse(line)));
  }
  return pairs;
}

Tensor embed_prompt(const std::string& prompt, std::size_t d_model, std::size_t text_len,
                    std::uint64_t seed) {
  std::istringstream is(prompt);
  std::vector<std::string> tokens;
  for (std::string tok; is >> tok;) tokens.push_back(tok);
  if (tokens.empty()) throw std::invalid_argument("embed_prompt: empty prompt");
  if (d_model == 0 || text_len == 0) throw ShapeError("embed_prompt: zero-sized embedding");
  tokens.resize(text_len, "<pad>");

  Tensor out({text_len, d_model});
  const std::uint64_t seed_mix = splitmix64(seed);
  for (std::size_t r = 0; r < text_len; ++r) {
    SeededRng rng(splitmix64(fnv1a64(tokens[r]) ^ splitmix64(r ^ seed_mix)));
    for (float& v : out.row(r)) v = rng.uniform(-1.0f, 1.0f);
  }
  return out;
}

void ProbeConfig::validate() const {
  if (text_len == 0) throw ConfigError("probe: text_len must be >= 1");
  if (image_len == 0) throw ConfigError("probe: image_len must be >= 1");
  if (steps == 0) throw ConfigError("probe: steps must be >= 1");
}

std::vector<double> pair_head_similarity(const Model& model, const PromptPair& pair,
                                         const ProbeConfig& cfg) {
  cfg.validate();
  if (model.empty()) throw std::invalid_argument("pair_head_similarity: empty model");
  const std::size_t d_model = model.front().d_model;
  const std::size_t heads = model.front().heads;
  const Tensor text_a = embed_prompt(pair.p1, d_model, cfg.text_len, cfg.seed);
  const Tensor text_b = embed_prompt(pair.p2, d_model, cfg.text_len, cfg.seed);
  Tensor latent_a = synthetic_latent(cfg.image_len, d_model, cfg.seed);
  Tensor latent_b = latent_a;

  std::vector<double> sum(heads, 0.0);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const StackResult a = run_stack(TokenSequence::from_parts(text_a, latent_a), model);
    const StackResult b = run_stack(TokenSequence::from_parts(text_b, latent_b), model);
    for (std::size_t blk = 0; blk < model.size(); ++blk) {
      const HeadSimilarities s = head_similarities(a.heads[blk], b.heads[blk]);
      for (std::size_t h = 0; h < heads; ++h) sum[h] += s.s[h];
    }
    latent_a = latent_step(latent_a, a.output.image(), cfg.steps);
    latent_b = latent_step(latent_b, b.output.image(), cfg.steps);
  }
  const double count = static_cast<double>(cfg.steps * model.size());
  for (double& v : sum) v /= count;
  return sum;
}

SensitivityProfile profile_heads(const Model& model, const std::vector<PromptPair>& dataset,
                                 const ProbeConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("profile_heads: empty dataset");
  if (model.empty()) throw std::invalid_argument("profile_heads: empty model");
  const std::size_t heads = model.front().heads;

  // category index -> (name, per-head similarity samples)
  std::map<std::size_t, std::pair<std::string, std::vector<std::vector<double>>>> per_category;
  for (const auto& pair : dataset) {
    auto& entry = per_category[pair.category];
    if (entry.second.empty()) {
      entry.first = pair.category_name;
      entry.second.resize(heads);
    } else if (entry.first != pair.category_name) {
      throw std::invalid_argument("profile_heads: category index " +
                                  std::to_string(pair.category) + " has two names");
    }
    const std::vector<double> s = pair_head_similarity(model, pair, cfg);
    for (std::size_t h = 0; h < heads; ++h) entry.second[h].push_back(s[h]);
  }

  SensitivityProfile profile;
  profile.heads = heads;
  profile.seed = cfg.seed;
  for (auto& [index, entry] : per_category) {
    auto& [name, samples] = entry;
    std::vector<double> raw(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      std::sort(samples[h].begin(), samples[h].end());
      double total = 0.0;
      for (double v : samples[h]) total += v;
      raw[h] = total / static_cast<double>(samples[h].size());
    }
    profile.categories.push_back(name);
    profile.scores.push_back(normalized_dissimilarity(raw));
    profile.raw.push_back(std::move(raw));
    profile.pair_counts.push_back(samples.front().size());
  }
  return profile;
}

namespace {

Tensor with_residual(const TokenSequence& seq, std::span<const Tensor> features,
                     const BlockWeights& w) {
  return add(seq.embeddings(), project_output(features, w));
}

void check_head(const BlockWeights& w, std::size_t head) {
  if (head >= w.heads) {
    throw std::out_of_range("head " + std::to_string(head) + " out of range for " +
                            std::to_string(w.heads) + " heads");
  }
}

}  // namespace

DropoutResult dropout_experiment(const BlockWeights& w, const TokenSequence& seq,
                                 std::size_t head) {
  check_head(w, head);
  const HeadOutputs heads = compute_heads(seq, w);
  DropoutResult r;
  r.baseline = with_residual(seq, apply_head_hooks(heads, HeadHookSet{}), w);
  r.ablated = with_residual(seq, apply_head_hooks(heads, HeadHookSet{}.drop(head)), w);
  for (std::size_t i = 0; i < r.baseline.rows(); ++i) {
    double sq = 0.0;
    auto a = r.baseline.row(i);
    auto b = r.ablated.row(i);
    for (std::size_t c = 0; c < a.size(); ++c) {
      const double d = static_cast<double>(a[c]) - b[c];
      sq += d * d;
    }
    r.delta_norms.push_back(std::sqrt(sq));
  }
  return r;
}

void swap_head_features(HeadOutputs& a, HeadOutputs& b, std::size_t head) {
  if (head >= a.heads() || head >= b.heads()) throw std::out_of_range("swap: head out of range");
  if (a.per_head[head].dims() != b.per_head[head].dims()) {
    throw ShapeError("swap: head feature shapes differ");
  }
  std::swap(a.per_head[head], b.per_head[head]);
}

SwapResult swap_experiment(const BlockWeights& w, const TokenSequence& seq_a,
                           const TokenSequence& seq_b, std::size_t head) {
  check_head(w, head);
  if (!same_layout(seq_a, seq_b)) throw ShapeError("swap_experiment: sequences differ in shape");
  HeadOutputs a = compute_heads(seq_a, w);
  HeadOutputs b = compute_heads(seq_b, w);
  swap_head_features(a, b, head);
  return {with_residual(seq_a, a.per_head, w), with_residual(seq_b, b.per_head, w)};
}

std::string format_profile_csv(const SensitivityProfile& p) {
  std::string out = "category,head,dissimilarity,raw_similarity\n";
  for (std::size_t c = 0; c < p.categories.size(); ++c) {
    for (std::size_t h = 0; h < p.heads; ++h) {
      out += p.categories[c] + ',' + std::to_string(h) + ',' + format_double(p.scores[c][h]) +
             ',' + format_double(p.raw[c][h]) + '\n';
    }
  }
  return out;
}

namespace {

double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw IoError("profile csv: bad number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

SensitivityProfile parse_profile_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "category,head,dissimilarity,raw_similarity") {
    throw IoError("profile csv: missing header");
  }
  SensitivityProfile p;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
    if (fields.size() != 4) throw IoError("profile csv: expected 4 fields: " + line);
    if (p.categories.empty() || p.categories.back() != fields[0]) {
      p.categories.push_back(fields[0]);
      p.scores.emplace_back();
      p.raw.emplace_back();
    }
    const std::size_t head = static_cast<std::size_t>(parse_double(fields[1]));
    if (head != p.scores.back().size()) throw IoError("profile csv: heads out of order");
    p.scores.back().push_back(parse_double(fields[2]));
    p.raw.back().push_back(parse_double(fields[3]));
  }
  if (p.categories.empty()) throw IoError("profile csv: no rows");
  p.heads = p.scores.front().size();
  for (const auto& row : p.scores) {
    if (row.size() != p.heads) throw IoError("profile csv: ragged head counts");
  }
  return p;
}

Tensor profile_grid(const SensitivityProfile& p) {
  Tensor grid({p.categories.size(), p.heads});
  for (std::size_t c = 0; c < p.categories.size(); ++c) {
    for (std::size_t h = 0; h < p.heads; ++h) grid(c, h) = static_cast<float>(p.scores[c][h]);
  }
  return grid;
}

void export_profile(const SensitivityProfile& p, const std::filesystem::path& csv_path,
                    const std::filesystem::path& pgm_path) {
  write_text_file(csv_path, format_profile_csv(p));
  write_pgm(pgm_path, profile_grid(p));
}

}  // namespace headrouter
