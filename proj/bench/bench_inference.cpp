// Whole-dataset inference: serial reference vs. OpenMP kernel.

#include <benchmark/benchmark.h>

#include <map>

#include "ulfine/data.hpp"
#include "ulfine/kernels.hpp"
#include "ulfine/prototypes.hpp"

using namespace ulfine;

namespace {

struct Workload {
  EmbeddingSet set;
  ModelParams params;
  Matrix text;
  FusionConfig cfg;
};

const Workload& workload(std::size_t rows) {
  static std::map<std::size_t, Workload> cache;
  auto it = cache.find(rows);
  if (it != cache.end()) return it->second;
  Workload w;
  const std::vector<std::size_t> per_class(10, rows / 10);
  w.set = synth_embeddings(10, 32, per_class, 1.0, 0.25, 1);
  w.params = ModelParams::initialize(10, 32, 4, 1.0, 0.1, 2);
  Rng rng(3);
  for (double& v : w.params.adapter_a.data()) v = 0.1 * rng.normal();
  w.text = synthetic_text_prototypes(10, 32, 4).rows;
  w.cfg.class_prior = Vector(10, 0.1);
  return cache.emplace(rows, std::move(w)).first->second;
}

void BM_InferSerial(benchmark::State& state) {
  const Workload& w = workload(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::infer_serial(w.set, w.params, w.text, w.cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_InferParallel(benchmark::State& state) {
  const Workload& w = workload(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::infer_parallel(w.set, w.params, w.text, w.cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_InferSerial)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_InferParallel)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
