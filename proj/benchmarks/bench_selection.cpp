#include <benchmark/benchmark.h>

#include <random>

#include "relens/selection.hpp"

using namespace relens;

namespace {

Heatmap bench_heatmap(int side) {
    std::mt19937_64 rng(3);
    Heatmap h;
    h.width = side;
    h.height = side;
    h.values.resize(static_cast<std::size_t>(side) * side);
    for (double& v : h.values) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return h;
}

}  // namespace

static void bm_select_bins(benchmark::State& state) {
    const Heatmap h = bench_heatmap(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        const ClusterSelection sel = select_bins(h, 10);
        benchmark::DoNotOptimize(sel.clusters);
    }
}
BENCHMARK(bm_select_bins)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void bm_select_kmeans(benchmark::State& state) {
    const Heatmap h = bench_heatmap(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        const ClusterSelection sel = select_kmeans(h, 10, 0, nullptr);
        benchmark::DoNotOptimize(sel.clusters);
    }
}
BENCHMARK(bm_select_kmeans)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void bm_select_meanshift(benchmark::State& state) {
    const Heatmap h = bench_heatmap(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        const ClusterSelection sel = select_meanshift(h, 0.1, 10);
        benchmark::DoNotOptimize(sel.clusters);
    }
}
BENCHMARK(bm_select_meanshift)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
