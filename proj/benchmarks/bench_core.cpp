#include <benchmark/benchmark.h>

#include <random>
#include <stdexcept>

#include "ptp/dsf.hpp"
#include "ptp/eval.hpp"
#include "ptp/mot.hpp"
#include "ptp/params.hpp"
#include "ptp/pipeline.hpp"

using namespace ptp;

namespace {

NumArray random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  NumArray m(r, c);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

RunConfig bench_config() {
  RunConfig c;
  c.num_scenes = 1;
  c.seed = 11;
  c.generator.min_agents = 8;
  c.generator.max_agents = 8;
  return c;
}

const Scene& bench_scene() {
  static const Scene scene = generate_dataset(bench_config(), 11).front();
  return scene;
}

const TrainingFrame& bench_frame() {
  static const TrainingFrame frame = [] {
    const RunConfig c = bench_config();
    for (std::size_t f = c.history; f < bench_scene().frames.size(); ++f)
      if (auto tf = make_training_frame(bench_scene(), f, c.history, c.horizon); tf && !tf->future_rows.empty())
        return *tf;
    throw std::runtime_error("no training frame in the benchmark scene");
  }();
  return frame;
}

void BM_Hungarian(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const NumArray w = random_matrix(n, n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(hungarian_max(w));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Hungarian)->RangeMultiplier(2)->Range(4, 64)->Complexity();

void BM_Iou3d(benchmark::State& state) {
  const Box a{0.0, 0.0, 0.0, 4.0, 1.8, 1.5, 0.3};
  const Box b{1.0, 0.1, 0.5, 4.2, 1.9, 1.6, -0.4};
  for (auto _ : state) benchmark::DoNotOptimize(iou3d(a, b));
}
BENCHMARK(BM_Iou3d);

void BM_DppLoss(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const NumArray b = random_matrix(k, k, 2);
  NumArray l(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t m = 0; m < k; ++m) l(i, j) += b(i, m) * b(j, m);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(dpp_loss(tape.constant(l)).value().item());
  }
}
BENCHMARK(BM_DppLoss)->Arg(5)->Arg(20);

void BM_ForwardFrame(benchmark::State& state) {
  const RunConfig c = bench_config();
  const ParamStore params = init_model(c, 1);
  const TrainingFrame& tf = bench_frame();
  state.counters["tracks"] = static_cast<double>(tf.tracks.size());
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(forward_frame(tape, params, c, tf.tracks, tf.detections).affinity.value());
  }
}
BENCHMARK(BM_ForwardFrame)->Unit(benchmark::kMicrosecond);

void BM_AffinityTrainStep(benchmark::State& state) {
  const RunConfig c = bench_config();
  ParamStore params = init_model(c, 1);
  params.set_trainable_prefixes({"enc.", "gnn.", "mot."});
  const TrainingFrame& tf = bench_frame();
  const AdamConfig adam;
  for (auto _ : state) {
    Tape tape;
    Var loss = affinity_loss(tape, forward_frame(tape, params, c, tf.tracks, tf.detections).affinity,
                             tf.gt_affinity).total;
    sgd_adam_step(params, tape.backward(loss, params), adam);
  }
}
BENCHMARK(BM_AffinityTrainStep)->Unit(benchmark::kMicrosecond);

void BM_InferenceScene(benchmark::State& state) {
  RunConfig c = bench_config();
  c.sampling = state.range(0) ? Sampling::kDsf : Sampling::kRandom;
  const ParamStore params = init_model(c, 1);
  for (auto _ : state) benchmark::DoNotOptimize(run_inference(c, params, bench_scene()).tracks.size());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(bench_scene().frames.size()));
}
BENCHMARK(BM_InferenceScene)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
