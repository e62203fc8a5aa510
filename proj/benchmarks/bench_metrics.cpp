#include <benchmark/benchmark.h>

#include <vector>

#include "mtl/metrics.hpp"
#include "mtl/random.hpp"

namespace {

void BM_ConfusionAndMetrics(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  mtl::Rng rng(5);
  std::vector<int> p(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = static_cast<int>(rng.below(2));
    y[i] = static_cast<int>(rng.below(2));
  }
  for (auto _ : state) benchmark::DoNotOptimize(mtl::compute_metrics(mtl::confusion(p, y)));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_ConfusionAndMetrics)->Arg(565)->Arg(711)->Arg(1 << 16);

}  // namespace
