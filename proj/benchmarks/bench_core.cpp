#include <benchmark/benchmark.h>

#include "headrouter/head_router.hpp"
#include "headrouter/pipeline.hpp"
#include "headrouter/rng.hpp"
#include "headrouter/token_refinement.hpp"

using namespace headrouter;

namespace {

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(1);
  const Tensor a = rng.uniform_matrix(n, n, -1, 1);
  const Tensor b = rng.uniform_matrix(n, n, -1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128);

void BM_Attend(benchmark::State& state) {
  const auto image = static_cast<std::size_t>(state.range(0));
  ModelConfig cfg;
  cfg.blocks = 1;
  const Model model = make_model(cfg);
  SeededRng rng(2);
  const TokenSequence seq(rng.uniform_matrix(8 + image, cfg.d_model, -1, 1), 8);
  for (auto _ : state) benchmark::DoNotOptimize(attend(seq, model[0]));
}
BENCHMARK(BM_Attend)->Arg(16)->Arg(64)->Arg(256);

void BM_DtrWeights(benchmark::State& state) {
  const auto image = static_cast<std::size_t>(state.range(0));
  SeededRng rng(3);
  const Tensor a = rng.uniform_matrix(image, 8, 0, 1);
  const DtrConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(dtr_weights(a, cfg));
}
BENCHMARK(BM_DtrWeights)->Arg(256)->Arg(4096);

void BM_Router(benchmark::State& state) {
  SeededRng rng(4);
  HeadOutputs rec, edit;
  rec.text_len = edit.text_len = 8;
  for (int h = 0; h < state.range(0); ++h) {
    rec.per_head.push_back(rng.uniform_matrix(72, 4, -1, 1));
    edit.per_head.push_back(rng.uniform_matrix(72, 4, -1, 1));
  }
  const RouterConfig cfg;
  for (auto _ : state) {
    const auto s = head_similarities(rec, edit);
    benchmark::DoNotOptimize(router_weights(normalized_dissimilarity(s.s), cfg));
  }
}
BENCHMARK(BM_Router)->Arg(4)->Arg(24);

void BM_EditPipeline(benchmark::State& state) {
  PipelineConfig cfg;
  cfg.steps = static_cast<std::size_t>(state.range(0));
  const EditPipeline pipeline(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(pipeline.run_edit());
}
BENCHMARK(BM_EditPipeline)->Arg(1)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
