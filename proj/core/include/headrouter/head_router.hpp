#pragma once

// Instance-adaptive head routing: per-head cosine similarity between the
// reconstruction and editing branches, min-max normalized into a
// dissimilarity, mapped through a shifted sigmoid to a head weight.

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "headrouter/joint_attention.hpp"

namespace headrouter {

struct RouterConfig {
  double gamma = 1.0;  // maximum weight increment
  double k = 10.0;     // sigmoid steepness
  double delta = 0.5;  // sigmoid center

  /// Also rejects settings where the sigmoid saturates in double precision,
  /// since then weights would touch the bounds 1 or 1 + gamma.
  void validate() const;
};

struct HeadSimilarities {
  std::vector<double> s;
  std::size_t block = 0;
  std::size_t step = 0;
};

struct HeadWeights {
  std::vector<double> w;
};

HeadSimilarities head_similarities(const HeadOutputs& rec, const HeadOutputs& edit);

/// (s_max - s_h) / (s_max - s_min); all zeros when every s_h is equal.
std::vector<double> normalized_dissimilarity(std::span<const double> s);

/// w_h = 1 + gamma * sigmoid(k * (d_h - delta)).
HeadWeights router_weights(std::span<const double> dissimilarity, const RouterConfig& cfg);

/// Scale hooks multiplying head h's features by w_h.
HeadHookSet apply_router(const HeadOutputs& edit, const HeadWeights& weights);

enum class SimilarityAggregation { per_step, mean };

/// Running per-block similarity state for the `mean` mode, which routes on the
/// mean of s_h over all steps seen so far for that block.
class SimilarityAggregator {
 public:
  explicit SimilarityAggregator(SimilarityAggregation mode) : mode_(mode) {}

  HeadSimilarities update(const HeadSimilarities& current);

 private:
  SimilarityAggregation mode_;
  std::map<std::size_t, std::pair<std::vector<double>, std::size_t>> sums_;
};

}  // namespace headrouter
