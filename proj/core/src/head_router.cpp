#include "headrouter/head_router.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace headrouter {

void RouterConfig::validate() const {
  if (!std::isfinite(gamma) || gamma <= 0.0) throw ConfigError("iarouter: gamma must be > 0");
  if (!std::isfinite(k) || k <= 0.0) throw ConfigError("iarouter: k must be > 0");
  if (!std::isfinite(delta) || delta < 0.0 || delta > 1.0) {
    throw ConfigError("iarouter: delta must lie in [0, 1]");
  }
  const double lo = 1.0 + gamma * sigmoid(-k * delta);
  const double hi = 1.0 + gamma * sigmoid(k * (1.0 - delta));
  if (!(lo > 1.0) || !(hi < 1.0 + gamma)) {
    throw ConfigError("iarouter: k too large, sigmoid saturates for gamma=" +
                      std::to_string(gamma) + " k=" + std::to_string(k));
  }
}

HeadSimilarities head_similarities(const HeadOutputs& rec, const HeadOutputs& edit) {
  if (rec.heads() != edit.heads()) {
    throw ShapeError("head_similarities: head counts differ (" + std::to_string(rec.heads()) +
                     " vs " + std::to_string(edit.heads()) + ")");
  }
  HeadSimilarities out;
  out.s.reserve(rec.heads());
  for (std::size_t h = 0; h < rec.heads(); ++h) {
    if (rec.per_head[h].dims() != edit.per_head[h].dims()) {
      throw ShapeError("head_similarities: head " + std::to_string(h) + " shapes differ");
    }
    // Row-major storage is already token-major, channel-minor.
    out.s.push_back(cosine(rec.per_head[h].values(), edit.per_head[h].values()));
  }
  return out;
}

std::vector<double> normalized_dissimilarity(std::span<const double> s) {
  if (s.empty()) throw ShapeError("normalized_dissimilarity: no heads");
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double s_min = *lo, s_max = *hi;
  std::vector<double> d(s.size(), 0.0);
  if (s_max == s_min) return d;
  const double range = s_max - s_min;
  for (std::size_t h = 0; h < s.size(); ++h) {
    d[h] = std::clamp((s_max - s[h]) / range, 0.0, 1.0);
  }
  // Exact endpoints regardless of rounding in the division.
  d[static_cast<std::size_t>(hi - s.begin())] = 0.0;
  d[static_cast<std::size_t>(lo - s.begin())] = 1.0;
  return d;
}

HeadWeights router_weights(std::span<const double> dissimilarity, const RouterConfig& cfg) {
  cfg.validate();
  HeadWeights out;
  out.w.reserve(dissimilarity.size());
  for (double d : dissimilarity) {
    if (!(d >= 0.0 && d <= 1.0)) throw std::invalid_argument("router_weights: d outside [0, 1]");
    out.w.push_back(1.0 + cfg.gamma * sigmoid(cfg.k * (d - cfg.delta)));
  }
  return out;
}

HeadHookSet apply_router(const HeadOutputs& edit, const HeadWeights& weights) {
  if (weights.w.size() != edit.heads()) {
    throw ShapeError("apply_router: " + std::to_string(weights.w.size()) + " weights for " +
                     std::to_string(edit.heads()) + " heads");
  }
  HeadHookSet hooks;
  for (std::size_t h = 0; h < weights.w.size(); ++h) hooks.scale(h, weights.w[h]);
  return hooks;
}

HeadSimilarities SimilarityAggregator::update(const HeadSimilarities& current) {
  if (mode_ == SimilarityAggregation::per_step) return current;
  auto& [sum, count] = sums_[current.block];
  if (sum.empty()) sum.assign(current.s.size(), 0.0);
  if (sum.size() != current.s.size()) throw ShapeError("SimilarityAggregator: head count changed");
  for (std::size_t h = 0; h < sum.size(); ++h) sum[h] += current.s[h];
  ++count;
  HeadSimilarities out = current;
  for (std::size_t h = 0; h < sum.size(); ++h) out.s[h] = sum[h] / static_cast<double>(count);
  return out;
}

}  // namespace headrouter
