// OpenMP kernels against their serial references at model-sized shapes.
//
//   bench_kernels [--benchmark_filter=Conv]
//
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <vector>

#include "dfres/kernels.hpp"

namespace k = dfres::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, float lo = -1.0f, float hi = 1.0f) {
  static std::mt19937_64 rng(0);
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Square gemm, side = range(0).
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n), b = random_vec(n * n);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    k::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

void BM_GemmReference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n), b = random_vec(n * n);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    k::reference::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

// 3x3 conv, C -> C channels on a range(1) x range(1) map, C = range(0).
struct ConvShape {
  std::size_t c, hw;
  explicit ConvShape(const benchmark::State& s)
      : c(static_cast<std::size_t>(s.range(0))), hw(static_cast<std::size_t>(s.range(1))) {}
  std::size_t plane() const { return hw * hw; }
};

void BM_Conv(benchmark::State& state) {
  const ConvShape s(state);
  const auto in = random_vec(s.c * s.plane()), w = random_vec(s.c * s.c * 9), bias = random_vec(s.c);
  std::vector<float> cols(s.c * 9 * s.plane()), out(s.c * s.plane());
  for (auto _ : state) {
    k::im2col(in.data(), s.c, s.hw, s.hw, 3, 1, 1, cols.data());
    for (std::size_t o = 0; o < s.c; ++o) {
      std::fill_n(out.begin() + o * s.plane(), s.plane(), bias[o]);
    }
    k::gemm(false, false, s.c, s.plane(), s.c * 9, w.data(), cols.data(), out.data(), true);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_ConvReference(benchmark::State& state) {
  const ConvShape s(state);
  const auto in = random_vec(s.c * s.plane()), w = random_vec(s.c * s.c * 9), bias = random_vec(s.c);
  std::vector<float> out(s.c * s.plane());
  for (auto _ : state) {
    k::reference::conv2d(in.data(), s.c, s.hw, s.hw, w.data(), bias.data(), s.c, 3, 1, 1, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_DeformConv(benchmark::State& state) {
  const ConvShape s(state);
  const auto in = random_vec(s.c * s.plane()), w = random_vec(s.c * s.c * 9), bias = random_vec(s.c);
  const auto offsets = random_vec(18 * s.plane(), -2.0f, 2.0f);
  std::vector<float> cols(s.c * 9 * s.plane()), out(s.c * s.plane());
  for (auto _ : state) {
    k::deform_im2col(in.data(), offsets.data(), s.c, s.hw, s.hw, cols.data());
    for (std::size_t o = 0; o < s.c; ++o) {
      std::fill_n(out.begin() + o * s.plane(), s.plane(), bias[o]);
    }
    k::gemm(false, false, s.c, s.plane(), s.c * 9, w.data(), cols.data(), out.data(), true);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_DeformConvReference(benchmark::State& state) {
  const ConvShape s(state);
  const auto in = random_vec(s.c * s.plane()), w = random_vec(s.c * s.c * 9), bias = random_vec(s.c);
  const auto offsets = random_vec(18 * s.plane(), -2.0f, 2.0f);
  std::vector<float> out(s.c * s.plane());
  for (auto _ : state) {
    k::reference::deform_conv2d(in.data(), offsets.data(), s.c, s.hw, s.hw, w.data(), bias.data(),
                                s.c, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

// Softmax over the rows of an n x n matrix, n = range(0).
void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = random_vec(n * n, -4.0f, 4.0f);
  std::vector<float> out(n * n);
  for (auto _ : state) {
    k::softmax_rows(in.data(), n, n, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_SoftmaxReference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = random_vec(n * n, -4.0f, 4.0f);
  std::vector<float> out(n * n);
  for (auto _ : state) {
    k::reference::softmax_rows(in.data(), n, n, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmReference)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv)->Args({16, 32})->Args({64, 32})->Args({64, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvReference)->Args({16, 32})->Args({64, 32})->Args({64, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeformConv)->Args({16, 32})->Args({64, 32})->Args({64, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeformConvReference)->Args({16, 32})->Args({64, 32})->Args({64, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Softmax)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SoftmaxReference)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
