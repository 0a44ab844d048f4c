#include <benchmark/benchmark.h>

#include "mpmflow/mapping.hpp"
#include "mpmflow/rng.hpp"

using namespace mpmflow;

static void BM_NormalizeTensor(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  PressureTensors t(d, d, d);
  Pcg32 rng(1, 1);
  for (float& v : t.xf) v = static_cast<float>(rng.uniform(-100, 100));
  for (auto _ : state) {
    PressureTensors copy = t;
    normalize_tensors(copy);
    benchmark::DoNotOptimize(copy.xf.data());
  }
  state.SetItemsProcessed(state.iterations() * 3 *
                          static_cast<std::int64_t>(t.voxels()));
}
BENCHMARK(BM_NormalizeTensor)->Arg(16)->Arg(32);

static void BM_MapFields(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Pcg32 rng(2, 2);
  PressureFields f;
  for (int i = 0; i < d - 1; ++i)
    for (int j = 0; j < d - 1; ++j)
      for (int k = 0; k < d - 1; ++k)
        if (rng.bounded(2) == 0)
          f.p_fluid.push({i, j, k}, rng.uniform(-10, 10));
  for (auto _ : state) {
    PressureTensors t = map_fields(f, d, d, d);
    benchmark::DoNotOptimize(t.xf.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(f.p_fluid.size()));
}
BENCHMARK(BM_MapFields)->Arg(16)->Arg(32);
