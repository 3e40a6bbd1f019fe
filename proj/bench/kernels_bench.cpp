// Serial reference vs OpenMP kernels at shapes the models actually use.
// Run: ./kernels_bench [--benchmark_filter=...]

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "clonelm/kernels.hpp"

namespace k = clonelm::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 engine(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = dist(engine);
    return v;
}

void bm_matmul_nt_serial(benchmark::State& state) {
    const std::size_t m = static_cast<std::size_t>(state.range(0));
    const std::size_t n = static_cast<std::size_t>(state.range(1));
    const std::size_t kk = static_cast<std::size_t>(state.range(2));
    std::vector<double> a = random_values(m * kk, 1);
    std::vector<double> b = random_values(n * kk, 2);
    std::vector<double> c(m * n);
    for (auto _ : state) {
        k::serial::matmul_nt(a, b, c, m, kk, n);
        benchmark::DoNotOptimize(c.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * kk));
}

void bm_matmul_nt_omp(benchmark::State& state) {
    const std::size_t m = static_cast<std::size_t>(state.range(0));
    const std::size_t n = static_cast<std::size_t>(state.range(1));
    const std::size_t kk = static_cast<std::size_t>(state.range(2));
    std::vector<double> a = random_values(m * kk, 1);
    std::vector<double> b = random_values(n * kk, 2);
    std::vector<double> c(m * n);
    k::set_parallel_enabled(true);
    for (auto _ : state) {
        k::matmul_nt(a, b, c, m, kk, n);
        benchmark::DoNotOptimize(c.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * kk));
}

void bm_softmax_serial(benchmark::State& state) {
    const std::size_t rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = static_cast<std::size_t>(state.range(1));
    std::vector<double> base = random_values(rows * cols, 3);
    std::vector<double> x = base;
    for (auto _ : state) {
        x = base;
        k::serial::softmax_rows(x, rows, cols);
        benchmark::DoNotOptimize(x.data());
    }
}

void bm_softmax_omp(benchmark::State& state) {
    const std::size_t rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = static_cast<std::size_t>(state.range(1));
    std::vector<double> base = random_values(rows * cols, 3);
    std::vector<double> x = base;
    k::set_parallel_enabled(true);
    for (auto _ : state) {
        x = base;
        k::softmax_rows(x, rows, cols);
        benchmark::DoNotOptimize(x.data());
    }
}

void bm_layer_norm_serial(benchmark::State& state) {
    const std::size_t rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = static_cast<std::size_t>(state.range(1));
    std::vector<double> x = random_values(rows * cols, 4);
    std::vector<double> gain(cols, 1.0), bias(cols, 0.0);
    std::vector<double> y(rows * cols), mean(rows), rstd(rows);
    for (auto _ : state) {
        k::serial::layer_norm_rows(x, gain, bias, y, mean, rstd, rows, cols);
        benchmark::DoNotOptimize(y.data());
    }
}

void bm_layer_norm_omp(benchmark::State& state) {
    const std::size_t rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = static_cast<std::size_t>(state.range(1));
    std::vector<double> x = random_values(rows * cols, 4);
    std::vector<double> gain(cols, 1.0), bias(cols, 0.0);
    std::vector<double> y(rows * cols), mean(rows), rstd(rows);
    k::set_parallel_enabled(true);
    for (auto _ : state) {
        k::layer_norm_rows(x, gain, bias, y, mean, rstd, rows, cols);
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

// logits projection (T x H) * (V x H)^T and attention-sized matmuls
BENCHMARK(bm_matmul_nt_serial)->Args({64, 512, 128})->Args({128, 2048, 256})->Args({256, 4096, 256});
BENCHMARK(bm_matmul_nt_omp)->Args({64, 512, 128})->Args({128, 2048, 256})->Args({256, 4096, 256});
BENCHMARK(bm_softmax_serial)->Args({256, 2048})->Args({1024, 4096});
BENCHMARK(bm_softmax_omp)->Args({256, 2048})->Args({1024, 4096});
BENCHMARK(bm_layer_norm_serial)->Args({256, 256})->Args({2048, 512});
BENCHMARK(bm_layer_norm_omp)->Args({256, 256})->Args({2048, 512});

BENCHMARK_MAIN();
