#include <benchmark/benchmark.h>

#include <random>

#include "relens/attribution.hpp"
#include "relens/network.hpp"

using namespace relens;

namespace {

double urand(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// VGG-flavored block on a 64x64 RGB input: conv-relu-pool-conv-relu-pool-dense.
Model bench_model() {
    std::mt19937_64 rng(1);
    Model model;
    model.input_shape = {3, 64, 64};
    model.preprocessing.mean = {0.5, 0.5, 0.5};
    model.preprocessing.scale = {2.0, 2.0, 2.0};
    model.class_labels = {"benign", "malignant"};

    const auto fill = [&](Tensor& t, double lo, double hi) {
        for (double& v : t.data) v = lo + (hi - lo) * urand(rng);
    };

    Conv2DLayer c1;
    c1.out_channels = 8;
    c1.kernel_h = c1.kernel_w = 3;
    c1.stride = 1;
    c1.padding = Padding::Same;
    c1.weights = Tensor({8, 3, 3, 3});
    fill(c1.weights, 0.01, 0.2);
    c1.bias = Tensor({8});
    fill(c1.bias, 0.01, 0.1);
    MaxPool2DLayer p1;
    p1.window_h = p1.window_w = 2;
    p1.stride = 2;

    Conv2DLayer c2;
    c2.out_channels = 8;
    c2.kernel_h = c2.kernel_w = 3;
    c2.stride = 1;
    c2.padding = Padding::Same;
    c2.weights = Tensor({8, 8, 3, 3});
    fill(c2.weights, 0.01, 0.2);
    c2.bias = Tensor({8});
    fill(c2.bias, 0.01, 0.1);
    MaxPool2DLayer p2;
    p2.window_h = p2.window_w = 2;
    p2.stride = 2;

    DenseLayer head;
    head.out_features = 2;
    head.weights = Tensor({2, 8 * 16 * 16});
    fill(head.weights, 0.001, 0.05);
    head.bias = Tensor({2});

    model.layers.emplace_back(std::move(c1));
    model.layers.emplace_back(ReluLayer{});
    model.layers.emplace_back(p1);
    model.layers.emplace_back(std::move(c2));
    model.layers.emplace_back(ReluLayer{});
    model.layers.emplace_back(p2);
    model.layers.emplace_back(FlattenLayer{});
    model.layers.emplace_back(std::move(head));
    validate_model(model);
    return model;
}

Tensor bench_input() {
    std::mt19937_64 rng(2);
    Tensor x({3, 64, 64});
    for (double& v : x.data) v = 0.1 + 0.9 * urand(rng);
    return x;
}

}  // namespace

static void bm_forward(benchmark::State& state) {
    const Model model = bench_model();
    const Tensor x = bench_input();
    for (auto _ : state) {
        const ActivationTrace trace = forward(model, x);
        benchmark::DoNotOptimize(trace.logits.data);
    }
}
BENCHMARK(bm_forward)->Unit(benchmark::kMillisecond);

static void bm_backward(benchmark::State& state) {
    const Model model = bench_model();
    const Tensor x = bench_input();
    const ActivationTrace trace = forward(model, x);
    for (auto _ : state) {
        const Tensor grad = backward(model, trace, 1);
        benchmark::DoNotOptimize(grad.data);
    }
}
BENCHMARK(bm_backward)->Unit(benchmark::kMillisecond);

static void bm_lrp_epsilon(benchmark::State& state) {
    const Model model = bench_model();
    const Tensor x = bench_input();
    for (auto _ : state) {
        const Heatmap h = lrp(model, x, 1, AttributionMethod::lrp_epsilon(0.01));
        benchmark::DoNotOptimize(h.values);
    }
}
BENCHMARK(bm_lrp_epsilon)->Unit(benchmark::kMillisecond);
