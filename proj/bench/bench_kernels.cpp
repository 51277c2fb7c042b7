#include <benchmark/benchmark.h>
#include <omp.h>

#include "ki67/kernels.hpp"
#include "ki67/rng.hpp"

using namespace ki67;

namespace {

BinaryMask blob_mask(int side) {
  Rng rng(5);
  BinaryMask m(side, side);
  for (int k = 0; k < side * side / 400; ++k) {
    const double cx = rng.uniform(0, side);
    const double cy = rng.uniform(0, side);
    const double r = rng.uniform(4, 10);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m(x, y) = 1;
      }
    }
  }
  return m;
}

Grid<std::int64_t> quantized_values(int side) {
  Rng rng(6);
  Grid<std::int64_t> g(side, side);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<std::int64_t>(rng.below(256));
  return g;
}

// Arguments: image side, thread count (0 = serial reference kernel).
void configure(benchmark::internal::Benchmark* b, int max_reference_side) {
  for (int side : {256, 1024}) {
    if (side <= max_reference_side) b->Args({side, 0});
    for (int t : {1, 2, 4}) b->Args({side, t});
  }
  b->ArgNames({"side", "threads"});
  b->Unit(benchmark::kMillisecond);
  b->UseRealTime();
}

void sizes(benchmark::internal::Benchmark* b) { configure(b, 1024); }

// The brute-force reference transform is quadratic in the pixel count.
void small_reference(benchmark::internal::Benchmark* b) { configure(b, 256); }

template <class Ref, class Par>
void run(benchmark::State& state, Ref ref, Par par) {
  const int threads = static_cast<int>(state.range(1));
  if (threads > 0) omp_set_num_threads(threads);
  for (auto _ : state) {
    if (threads == 0) {
      benchmark::DoNotOptimize(ref());
    } else {
      benchmark::DoNotOptimize(par());
    }
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_erode(benchmark::State& state) {
  const auto m = blob_mask(static_cast<int>(state.range(0)));
  const auto se = StructuringElement::disc(3);
  run(state, [&] { return kernels::reference::erode(m, se, true); },
      [&] { return kernels::erode(m, se, true); });
}

void BM_dilate(benchmark::State& state) {
  const auto m = blob_mask(static_cast<int>(state.range(0)));
  const auto se = StructuringElement::disc(3);
  run(state, [&] { return kernels::reference::dilate(m, se); },
      [&] { return kernels::dilate(m, se); });
}

void BM_window_sums(benchmark::State& state) {
  const auto g = quantized_values(static_cast<int>(state.range(0)));
  run(state, [&] { return kernels::reference::window_sums(g, 61); },
      [&] { return kernels::window_sums(g, 61); });
}

void BM_distance_transform(benchmark::State& state) {
  const auto m = blob_mask(static_cast<int>(state.range(0)));
  run(state, [&] { return kernels::reference::squared_distance_transform(m); },
      [&] { return kernels::squared_distance_transform(m); });
}

}  // namespace

BENCHMARK(BM_erode)->Apply(sizes);
BENCHMARK(BM_dilate)->Apply(sizes);
BENCHMARK(BM_window_sums)->Apply(sizes);
BENCHMARK(BM_distance_transform)->Apply(small_reference);

BENCHMARK_MAIN();
