#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "lcgn/adam.hpp"
#include "lcgn/model.hpp"
#include "lcgn/samples.hpp"
#include "lcgn/scene.hpp"

namespace {

using namespace lcgn;

ModelConfig bench_config(std::int64_t d, std::int64_t n_max) {
  ModelConfig mc;
  mc.lcgn.d_txt = d;
  mc.lcgn.d_ctx = d;
  mc.lcgn.d_loc = d;
  mc.lcgn.iterations = 4;
  mc.lcgn.n_max = n_max;
  mc.vocab_size = 64;
  mc.d_feat = feature_width(FeatureMode::symbolic);
  mc.d_ans = 25;
  mc.with_ref_head = false;
  return mc;
}

Batch<float> synthetic_batch(const ModelConfig& mc, std::int64_t batch,
                             std::int64_t n, std::int64_t s,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Batch<float> out;
  for (std::int64_t b = 0; b < batch; ++b) {
    std::vector<std::int64_t> seq;
    for (std::int64_t k = 0; k < s; ++k)
      seq.push_back(2 + static_cast<std::int64_t>(rng() % 60));
    out.tokens.push_back(std::move(seq));
    out.labels.push_back(static_cast<std::int64_t>(rng() % mc.d_ans));
    out.n_real.push_back(n);
    out.relational.push_back(false);
  }
  std::vector<float> feat(static_cast<std::size_t>(batch * n * mc.d_feat));
  for (auto& v : feat) v = dist(rng);
  out.x_feat = Tensor<float>({batch, n, mc.d_feat}, std::move(feat));
  out.ent_mask = Tensor<float>::full({batch, n}, 1.0f);
  out.gt_offsets = Tensor<float>::zeros({batch, 4});
  return out;
}

void BM_ForwardVqa(benchmark::State& state) {
  const auto d = state.range(0);
  const auto mc = bench_config(d, 10);
  auto params = ModelParams<float>::init(mc, 1);
  auto batch = synthetic_batch(mc, 64, 10, 14, 2);
  ForwardOptions opts;
  for (auto _ : state) {
    auto fwd = model_forward(batch, params, mc, opts);
    benchmark::DoNotOptimize(fwd.loss.item());
  }
}
BENCHMARK(BM_ForwardVqa)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TrainStepVqa(benchmark::State& state) {
  const auto d = state.range(0);
  const auto mc = bench_config(d, 10);
  auto params = ModelParams<float>::init(mc, 1);
  auto adam = AdamState<float>::init(params);
  AdamConfig<float> acfg;
  auto batch = synthetic_batch(mc, 64, 10, 14, 2);
  ForwardOptions opts;
  for (auto _ : state) {
    Tape<float> tape;
    {
      TapeScope<float> scope(tape);
      auto fwd = model_forward(batch, params, mc, opts);
      tape.backward(fwd.loss);
    }
    adam.step(params, acfg);
  }
}
BENCHMARK(BM_TrainStepVqa)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_EdgeWeights(benchmark::State& state) {
  const auto n = state.range(0);
  const auto mc = bench_config(64, n);
  auto params = ModelParams<float>::init(mc, 1);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> j(static_cast<std::size_t>(64 * n * (64 * 3)));
  for (auto& v : j) v = dist(rng);
  Tensor<float> joint({64, n, 64 * 3}, std::move(j));
  std::vector<float> cv(static_cast<std::size_t>(64 * 64));
  for (auto& v : cv) v = dist(rng);
  Tensor<float> command({64, 64}, std::move(cv));
  auto mask = Tensor<float>::full({64, n}, 1.0f);
  for (auto _ : state) {
    auto w = edge_weights(joint, command, params, mask);
    benchmark::DoNotOptimize(w.data()[0]);
  }
}
BENCHMARK(BM_EdgeWeights)->Arg(10)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_GenerateScene(benchmark::State& state) {
  std::int64_t id = 0;
  for (auto _ : state) {
    auto scene = generate_scene(7, id++);
    benchmark::DoNotOptimize(scene.objects.size());
  }
}
BENCHMARK(BM_GenerateScene);

void BM_GenerateSamples(benchmark::State& state) {
  SampleGenerator gen(TaskKind::vqa, TemplateSet::all, 11);
  std::int64_t id = 0;
  for (auto _ : state) {
    auto scene = generate_scene(13, id++);
    auto samples = gen.generate_for_scene(scene, 10);
    benchmark::DoNotOptimize(samples.size());
  }
}
BENCHMARK(BM_GenerateSamples);

}  // namespace

BENCHMARK_MAIN();
