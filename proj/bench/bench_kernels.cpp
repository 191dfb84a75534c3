// Kernel timings: convolution flavours and the two Lambda paths.

#include <benchmark/benchmark.h>

#include <vector>

#include "bdan/bridge.hpp"
#include "bdan/kernels.hpp"
#include "bdan/random.hpp"
#include "bdan/runtime.hpp"

using namespace bdan;

namespace {

std::vector<Real> gaussian(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<Real> g(0, 1);
    std::vector<Real> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

// Second convolution of the extractor at e = 22, T = 350: 8 -> 16 channels, 3x1 kernel, same padding.
kernels::ConvGeometry geometry(benchmark::State& state) {
    kernels::ConvGeometry g;
    g.batch = static_cast<std::size_t>(state.range(0));
    g.in_channels = 8;
    g.out_channels = 16;
    g.in_rows = 22;
    g.in_cols = 326;
    g.kernel_rows = 3;
    g.kernel_cols = 1;
    g.pad_rows = 1;
    return g;
}

template <auto Fn>
void conv_forward(benchmark::State& state) {
    const auto g = geometry(state);
    const auto in = gaussian(g.batch * g.in_channels * g.in_rows * g.in_cols, 1);
    const auto w = gaussian(g.out_channels * g.in_channels * g.kernel_rows * g.kernel_cols, 2);
    const auto b = gaussian(g.out_channels, 3);
    std::vector<Real> out(g.batch * g.out_channels * g.out_rows() * g.out_cols());
    for (auto _ : state) {
        Fn(g, in.data(), w.data(), b.data(), out.data());
        benchmark::DoNotOptimize(out.data());
    }
}

void conv_serial(benchmark::State& s) { conv_forward<kernels::serial::conv2d_forward>(s); }
void conv_omp(benchmark::State& s) { conv_forward<kernels::omp::conv2d_forward>(s); }
void conv_reference(benchmark::State& s) { conv_forward<kernels::reference::conv2d_forward>(s); }

BENCHMARK(conv_serial)->Arg(8)->Arg(40)->Unit(benchmark::kMillisecond);
BENCHMARK(conv_omp)->Arg(8)->Arg(40)->Unit(benchmark::kMillisecond);
BENCHMARK(conv_reference)->Arg(8)->Arg(40)->Unit(benchmark::kMillisecond);

Tensor lambda_operand(benchmark::State& state) {
    const auto e = static_cast<std::size_t>(state.range(0));
    const auto n = static_cast<std::size_t>(state.range(1));
    const auto t = static_cast<std::size_t>(state.range(2));
    return Tensor::from({e, n, t}, gaussian(e * n * t, 4));
}

void lambda_naive_path(benchmark::State& state) {
    const Tensor a = lambda_operand(state);
    const Tensor b = expand(a);
    for (auto _ : state) benchmark::DoNotOptimize(lambda_naive(a, b));
}

void lambda_fast_path(benchmark::State& state) {
    const Tensor a = lambda_operand(state);
    const Tensor b = expand(a);
    for (auto _ : state) benchmark::DoNotOptimize(lambda_fast(a, b).item());
}

BENCHMARK(lambda_naive_path)->Args({22, 40, 352})->Args({118, 40, 352})->Unit(benchmark::kMillisecond);
BENCHMARK(lambda_fast_path)->Args({22, 40, 352})->Args({118, 40, 352})->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
    configure_allocator();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
