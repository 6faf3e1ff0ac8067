#include "headrouter/joint_attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "headrouter/rng.hpp"
#include "headrouter/tensor_io.hpp"

namespace headrouter {

TokenSequence::TokenSequence(Tensor embeddings, std::size_t text_len)
    : embeddings_(std::move(embeddings)), text_len_(text_len) {
  if (embeddings_.rank() != 2) throw ShapeError("TokenSequence: embeddings must be rank-2");
  if (text_len_ == 0 || text_len_ >= embeddings_.rows()) {
    throw ShapeError("TokenSequence: need at least one text and one image token (M=" +
                     std::to_string(text_len_) + ", L=" + std::to_string(embeddings_.rows()) +
                     ")");
  }
}

TokenSequence TokenSequence::from_parts(const Tensor& text, const Tensor& image) {
  return TokenSequence(concat_rows(text, image), text.rows());
}

TokenSequence TokenSequence::with_embeddings(Tensor embeddings) const {
  if (embeddings.dims() != embeddings_.dims()) {
    throw ShapeError("TokenSequence: replacement embeddings change shape " +
                     embeddings_.shape_string() + " -> " + embeddings.shape_string());
  }
  return TokenSequence(std::move(embeddings), text_len_);
}

bool same_layout(const TokenSequence& a, const TokenSequence& b) noexcept {
  return a.text_len() == b.text_len() && a.embeddings().dims() == b.embeddings().dims();
}

namespace {

void check_path(const PathProjections& p, const BlockWeights& w, const char* name) {
  auto check = [&](const std::vector<Tensor>& mats, const char* which) {
    if (mats.size() != w.heads) {
      throw ShapeError(std::string("BlockWeights: ") + name + " " + which + " has " +
                       std::to_string(mats.size()) + " heads, expected " +
                       std::to_string(w.heads));
    }
    for (const auto& m : mats) {
      if (m.rank() != 2 || m.rows() != w.d_model || m.cols() != w.d_head) {
        throw ShapeError(std::string("BlockWeights: ") + name + " " + which +
                         " projection has shape " + m.shape_string());
      }
      if (!all_finite(m)) throw ShapeError("BlockWeights: non-finite projection");
    }
  };
  check(p.query, "query");
  check(p.key, "key");
  check(p.value, "value");
}

PathProjections make_path(std::size_t heads, const std::function<Tensor()>& gen) {
  PathProjections p;
  for (auto* mats : {&p.query, &p.key, &p.value}) {
    for (std::size_t h = 0; h < heads; ++h) mats->push_back(gen());
  }
  return p;
}

// Q_h K_h^T / sqrt(d_head), accumulated in double.
Tensor scaled_logits(const Tensor& q, const Tensor& k) {
  const std::size_t n = q.rows(), d = q.cols();
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    auto qi = q.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      auto kj = k.row(j);
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += static_cast<double>(qi[c]) * kj[c];
      out(i, j) = static_cast<float>(acc * inv);
    }
  }
  return out;
}

}  // namespace

void BlockWeights::validate() const {
  if (heads == 0 || d_model == 0 || d_head == 0) {
    throw ShapeError("BlockWeights: heads, d_model and d_head must be positive");
  }
  check_path(image, *this, "image");
  check_path(text, *this, "text");
  if (output.rank() != 2 || output.rows() != heads * d_head || output.cols() != d_model) {
    throw ShapeError("BlockWeights: output projection has shape " + output.shape_string());
  }
  if (!all_finite(output)) throw ShapeError("BlockWeights: non-finite output projection");
}

BlockWeights BlockWeights::zeros(std::size_t heads, std::size_t d_model, std::size_t d_head) {
  BlockWeights w;
  w.heads = heads;
  w.d_model = d_model;
  w.d_head = d_head;
  auto gen = [&] { return Tensor::matrix(d_model, d_head); };
  w.image = make_path(heads, gen);
  w.text = make_path(heads, gen);
  w.output = Tensor::matrix(heads * d_head, d_model);
  w.validate();
  return w;
}

BlockWeights BlockWeights::identity(std::size_t heads, std::size_t d_model) {
  BlockWeights w = zeros(heads, d_model, d_model);
  auto eye = [&] {
    Tensor t = Tensor::matrix(d_model, d_model);
    for (std::size_t i = 0; i < d_model; ++i) t(i, i) = 1.0f;
    return t;
  };
  w.image = make_path(heads, eye);
  w.text = make_path(heads, eye);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < d_model; ++i) w.output(h * d_model + i, i) = 1.0f;
  }
  return w;
}

void ModelConfig::validate() const {
  if (blocks == 0) throw ConfigError("model: blocks must be >= 1");
  if (heads == 0) throw ConfigError("model: heads must be >= 1");
  if (d_model == 0) throw ConfigError("model: d_model must be >= 1");
  if (d_head == 0) throw ConfigError("model: d_head must be >= 1");
}

BlockWeights random_block(const ModelConfig& cfg, std::size_t block_index) {
  cfg.validate();
  SeededRng rng(splitmix64(cfg.seed ^ splitmix64(block_index)));
  const float proj = 1.0f / std::sqrt(static_cast<float>(cfg.d_model));
  const float out = 1.0f / std::sqrt(static_cast<float>(cfg.heads * cfg.d_head));
  auto gen = [&] { return rng.uniform_matrix(cfg.d_model, cfg.d_head, -proj, proj); };

  BlockWeights w;
  w.heads = cfg.heads;
  w.d_model = cfg.d_model;
  w.d_head = cfg.d_head;
  w.image = make_path(cfg.heads, gen);
  w.text = make_path(cfg.heads, gen);
  w.output = rng.uniform_matrix(cfg.heads * cfg.d_head, cfg.d_model, -out, out);
  w.validate();
  return w;
}

Model make_model(const ModelConfig& cfg) {
  cfg.validate();
  if (cfg.weights_dir) return load_model(cfg, *cfg.weights_dir);
  Model model;
  model.reserve(cfg.blocks);
  for (std::size_t b = 0; b < cfg.blocks; ++b) model.push_back(random_block(cfg, b));
  return model;
}

namespace {

std::filesystem::path block_file(const std::filesystem::path& dir, std::size_t b,
                                 const std::string& part) {
  return dir / ("block" + std::to_string(b) + "." + part + ".hrtf");
}

Tensor stack_heads(const std::vector<Tensor>& mats) {
  const std::size_t h = mats.size(), r = mats.front().rows(), c = mats.front().cols();
  std::vector<float> data;
  data.reserve(h * r * c);
  for (const auto& m : mats) data.insert(data.end(), m.data().begin(), m.data().end());
  return Tensor({h, r, c}, std::move(data));
}

std::vector<Tensor> unstack_heads(const Tensor& t, const ModelConfig& cfg) {
  if (t.dims() != std::vector<std::size_t>{cfg.heads, cfg.d_model, cfg.d_head}) {
    throw ShapeError("weights file has shape " + t.shape_string() +
                     ", expected [heads x d_model x d_head]");
  }
  std::vector<Tensor> out;
  const std::size_t n = cfg.d_model * cfg.d_head;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    std::vector<float> data(t.data().begin() + static_cast<std::ptrdiff_t>(h * n),
                            t.data().begin() + static_cast<std::ptrdiff_t>((h + 1) * n));
    out.emplace_back(std::vector<std::size_t>{cfg.d_model, cfg.d_head}, std::move(data));
  }
  return out;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t b = 0; b < model.size(); ++b) {
    const auto& w = model[b];
    save_hrtf(block_file(dir, b, "img_q"), stack_heads(w.image.query));
    save_hrtf(block_file(dir, b, "img_k"), stack_heads(w.image.key));
    save_hrtf(block_file(dir, b, "img_v"), stack_heads(w.image.value));
    save_hrtf(block_file(dir, b, "txt_q"), stack_heads(w.text.query));
    save_hrtf(block_file(dir, b, "txt_k"), stack_heads(w.text.key));
    save_hrtf(block_file(dir, b, "txt_v"), stack_heads(w.text.value));
    save_hrtf(block_file(dir, b, "out"), w.output);
  }
}

Model load_model(const ModelConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  Model model;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    BlockWeights w;
    w.heads = cfg.heads;
    w.d_model = cfg.d_model;
    w.d_head = cfg.d_head;
    w.image.query = unstack_heads(load_hrtf(block_file(dir, b, "img_q")), cfg);
    w.image.key = unstack_heads(load_hrtf(block_file(dir, b, "img_k")), cfg);
    w.image.value = unstack_heads(load_hrtf(block_file(dir, b, "img_v")), cfg);
    w.text.query = unstack_heads(load_hrtf(block_file(dir, b, "txt_q")), cfg);
    w.text.key = unstack_heads(load_hrtf(block_file(dir, b, "txt_k")), cfg);
    w.text.value = unstack_heads(load_hrtf(block_file(dir, b, "txt_v")), cfg);
    w.output = load_hrtf(block_file(dir, b, "out"));
    w.validate();
    model.push_back(std::move(w));
  }
  return model;
}

JointAttentionMap::JointAttentionMap(Tensor matrix, std::size_t text_len)
    : matrix_(std::move(matrix)), text_len_(text_len) {
  if (matrix_.rank() != 2 || matrix_.rows() != matrix_.cols()) {
    throw ShapeError("JointAttentionMap: expected a square matrix, got " +
                     matrix_.shape_string());
  }
  if (text_len_ == 0 || text_len_ >= matrix_.rows()) {
    throw ShapeError("JointAttentionMap: text length out of range");
  }
}

Tensor extract_text_to_image(const JointAttentionMap& map) {
  return slice_cols(slice_rows(map.matrix(), map.text_len(), map.matrix().rows()), 0,
                    map.text_len());
}

QkvProjection project_qkv(const TokenSequence& seq, const BlockWeights& w) {
  w.validate();
  if (seq.d_model() != w.d_model) {
    throw ShapeError("project_qkv: sequence width " + std::to_string(seq.d_model()) +
                     " != d_model " + std::to_string(w.d_model));
  }
  const Tensor text = seq.text();
  const Tensor image = seq.image();
  auto project = [&](const std::vector<Tensor>& txt, const std::vector<Tensor>& img) {
    std::vector<Tensor> per_head;
    per_head.reserve(w.heads);
    for (std::size_t h = 0; h < w.heads; ++h) {
      per_head.push_back(concat_rows(matmul(text, txt[h]), matmul(image, img[h])));
    }
    return concat_cols(per_head);
  };
  return {project(w.text.query, w.image.query), project(w.text.key, w.image.key),
          project(w.text.value, w.image.value)};
}

HeadHookSet& HeadHookSet::scale(std::size_t head, double factor) {
  hooks_[head].scale = factor;
  return *this;
}

HeadHookSet& HeadHookSet::drop(std::size_t head) {
  hooks_[head].drop = true;
  return *this;
}

HeadHookSet& HeadHookSet::replace(std::size_t head, Tensor features) {
  hooks_[head].replacement = std::move(features);
  return *this;
}

HeadHookSet& HeadHookSet::on_attention_map(AttentionMapHook hook) {
  map_hook_ = std::move(hook);
  return *this;
}

void HeadHookSet::validate(std::size_t head_count) const {
  for (const auto& [head, hook] : hooks_) {
    if (head >= head_count) {
      throw std::out_of_range("hook references head " + std::to_string(head) + " but block has " +
                              std::to_string(head_count) + " heads");
    }
  }
}

HeadOutputs compute_heads(const TokenSequence& seq, const BlockWeights& w,
                          const AttentionMapHook& map_hook) {
  const QkvProjection qkv = project_qkv(seq, w);
  HeadOutputs out;
  out.text_len = seq.text_len();
  out.per_head.reserve(w.heads);
  out.attention_maps.reserve(w.heads);
  for (std::size_t h = 0; h < w.heads; ++h) {
    const std::size_t lo = h * w.d_head, hi = lo + w.d_head;
    Tensor probs = softmax_rows(scaled_logits(slice_cols(qkv.query, lo, hi),
                                              slice_cols(qkv.key, lo, hi)));
    const Tensor v = slice_cols(qkv.value, lo, hi);
    if (map_hook) {
      JointAttentionMap edited = map_hook(h, JointAttentionMap(probs, seq.text_len()));
      if (edited.matrix().dims() != probs.dims()) {
        throw ShapeError("attention map hook changed the map shape");
      }
      out.per_head.push_back(matmul(edited.matrix(), v));
    } else {
      out.per_head.push_back(matmul(probs, v));
    }
    out.attention_maps.push_back(std::move(probs));
  }
  return out;
}

std::vector<Tensor> apply_head_hooks(const HeadOutputs& heads, const HeadHookSet& hooks) {
  hooks.validate(heads.heads());
  std::vector<Tensor> features = heads.per_head;
  for (const auto& [h, hook] : hooks.heads()) {
    Tensor& v = features[h];
    if (hook.scale) {
      const double s = *hook.scale;
      for (float& x : v.values()) x = static_cast<float>(static_cast<double>(x) * s);
    }
    if (hook.drop) {
      for (float& x : v.values()) x = 0.0f;
    }
    if (hook.replacement) {
      if (hook.replacement->dims() != v.dims()) {
        throw ShapeError("replacement features for head " + std::to_string(h) + " have shape " +
                         hook.replacement->shape_string() + ", expected " + v.shape_string());
      }
      v = *hook.replacement;
    }
  }
  return features;
}

Tensor project_output(std::span<const Tensor> features, const BlockWeights& w) {
  if (features.size() != w.heads) {
    throw ShapeError("project_output: got " + std::to_string(features.size()) +
                     " head features, expected " + std::to_string(w.heads));
  }
  return matmul(concat_cols(features), w.output);
}

AttendResult attend(const TokenSequence& seq, const BlockWeights& w, const HeadHookSet& hooks) {
  hooks.validate(w.heads);
  HeadOutputs heads = compute_heads(seq, w, hooks.map_hook());
  const std::vector<Tensor> features = apply_head_hooks(heads, hooks);
  return {seq.with_embeddings(project_output(features, w)), std::move(heads)};
}

StackResult run_stack(const TokenSequence& seq, const Model& model,
                      std::span<const HeadHookSet> hooks,
                      const BlockInputTransform& input_transform) {
  if (model.empty()) throw std::invalid_argument("run_stack: model has no blocks");
  if (!hooks.empty() && hooks.size() != model.size()) {
    throw std::invalid_argument("run_stack: need one hook set per block");
  }
  static const HeadHookSet kNoHooks;
  TokenSequence current = seq;
  std::optional<TokenSequence> previous;
  std::vector<HeadOutputs> recorded;
  recorded.reserve(model.size());
  for (std::size_t b = 0; b < model.size(); ++b) {
    TokenSequence input =
        input_transform ? input_transform(b, previous ? &*previous : nullptr, current) : current;
    if (!same_layout(input, current)) {
      throw ShapeError("block input transform changed the token layout");
    }
    AttendResult r = attend(input, model[b], hooks.empty() ? kNoHooks : hooks[b]);
    current = input.with_embeddings(add(input.embeddings(), r.output.embeddings()));
    previous = std::move(input);
    recorded.push_back(std::move(r.heads));
  }
  return {std::move(current), std::move(recorded)};
}

}  // namespace headrouter
