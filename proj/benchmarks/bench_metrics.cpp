#include <benchmark/benchmark.h>

#include <random>

#include "relens/evaluation.hpp"

using namespace relens;

static void bm_roc_auc(benchmark::State& state) {
    std::mt19937_64 rng(4);
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        labels[i] = static_cast<int>(rng() % 2);
    }
    labels[0] = 0;
    labels[1] = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(roc_auc(scores, labels));
    }
}
BENCHMARK(bm_roc_auc)->Arg(1000)->Arg(10000);

static void bm_occlude(benchmark::State& state) {
    Tensor img({3, 128, 128}, 0.7);
    std::mt19937_64 rng(5);
    std::vector<std::int64_t> pixels;
    for (int i = 0; i < 2048; ++i)
        pixels.push_back(static_cast<std::int64_t>(rng() % (128 * 128)));
    for (auto _ : state) {
        const Tensor out = occlude(img, pixels, OcclusionMode::Mask);
        benchmark::DoNotOptimize(out.data);
    }
}
BENCHMARK(bm_occlude);
