// Serial vs OpenMP dense kernels and evaluation loop.

#include <benchmark/benchmark.h>

#include <random>

#include "procplan/eval.hpp"
#include "procplan/kernels.hpp"
#include "procplan/mlp.hpp"

using namespace procplan;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (double& x : m.data()) x = n(rng);
    return m;
}

template <kernels::Backend B>
void BM_DenseForward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const auto width = static_cast<std::size_t>(state.range(1));
    const Matrix in = random_matrix(batch, width, 1), w = random_matrix(width, width, 2);
    const std::vector<double> bias(width, 0.1);
    Matrix out(batch, width);
    for (auto _ : state) {
        kernels::dense_forward(B, in, w, bias, out);
        benchmark::DoNotOptimize(out.data().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch * width * width));
}

template <kernels::Backend B>
void BM_DenseBackward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const auto width = static_cast<std::size_t>(state.range(1));
    const Matrix in = random_matrix(batch, width, 1), w = random_matrix(width, width, 2);
    const Matrix grad = random_matrix(batch, width, 3);
    Matrix gw(width, width), gi(batch, width);
    std::vector<double> gb(width);
    for (auto _ : state) {
        kernels::dense_backward_params(B, grad, in, gw, gb);
        kernels::dense_backward_input(B, grad, w, gi);
        benchmark::DoNotOptimize(gw.data().data());
        benchmark::DoNotOptimize(gi.data().data());
    }
}

template <kernels::Backend B>
void BM_MlpStep(benchmark::State& state) {
    Mlp net({240, 256, 256, 224}, 1);
    net.set_backend(B);
    const Matrix in = random_matrix(32, 240, 4), g = random_matrix(32, 224, 5);
    for (auto _ : state) {
        Mlp::Cache cache;
        benchmark::DoNotOptimize(net.forward(in, &cache));
        benchmark::DoNotOptimize(net.backward(cache, g));
    }
}

void run_eval(benchmark::State& state, bool parallel) {
    std::mt19937_64 rng(6);
    std::vector<EvalSample> split(512);
    for (auto& s : split) s.ground_truth.steps = {static_cast<ActionId>(rng() % 20), 3, 4, 5};
    // Stand-in for a model call: a fixed amount of arithmetic per sample.
    const PlannerFn planner = [](const EvalSample& s, std::uint64_t seed) {
        std::mt19937_64 local(seed);
        double acc = 0.0;
        for (int i = 0; i < 20000; ++i) acc += static_cast<double>(local() % 7);
        Prediction p;
        p.steps = s.ground_truth.steps;
        if (acc < 0) p.steps[0] = 0;
        return p;
    };
    for (auto _ : state) {
        auto r = parallel ? evaluate(planner, split, {}, 1) : evaluate_serial(planner, split, {}, 1);
        benchmark::DoNotOptimize(r.success_rate);
    }
}

void BM_EvaluateSerial(benchmark::State& state) { run_eval(state, false); }
void BM_EvaluateParallel(benchmark::State& state) { run_eval(state, true); }

}  // namespace

BENCHMARK(BM_DenseForward<kernels::Backend::serial>)->Args({32, 256})->Args({256, 256});
BENCHMARK(BM_DenseForward<kernels::Backend::parallel>)->Args({32, 256})->Args({256, 256});
BENCHMARK(BM_DenseBackward<kernels::Backend::serial>)->Args({32, 256})->Args({256, 256});
BENCHMARK(BM_DenseBackward<kernels::Backend::parallel>)->Args({32, 256})->Args({256, 256});
BENCHMARK(BM_MlpStep<kernels::Backend::serial>);
BENCHMARK(BM_MlpStep<kernels::Backend::parallel>);
BENCHMARK(BM_EvaluateSerial);
BENCHMARK(BM_EvaluateParallel);

BENCHMARK_MAIN();
