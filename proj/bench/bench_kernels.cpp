// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "semsplit/kernels.hpp"

using namespace semsplit::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Shapes taken from the toy-width network (base width 32) with 50 users per batch.
ConvGeom downsample_geom() { return {50, 32, 16, 16, 64, 4, 2, 1}; }
ConvGeom pointwise_geom() { return {50, 64, 8, 8, 256, 1, 1, 0}; }
DepthwiseGeom depthwise_geom() { return {50, 64, 8, 8, 7, 1, 3}; }
TransposeGeom transpose_geom() { return {50, 64, 8, 8, 32, 4, 2, 1}; }

template <class Geom>
std::size_t x_size(const Geom& g) {
  return static_cast<std::size_t>(g.batch) * g.in_ch * g.in_h * g.in_w;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_buffer(static_cast<std::size_t>(n) * n, 1);
  const auto b = random_buffer(static_cast<std::size_t>(n) * n, 2);
  std::vector<double> c(static_cast<std::size_t>(n) * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      par::gemm(n, n, n, a, false, b, false, c, false);
    } else {
      ref::gemm(n, n, n, a, false, b, false, c, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n * n);
}

template <bool Parallel>
void BM_Conv2d(benchmark::State& state) {
  const ConvGeom g = state.range(0) == 0 ? downsample_geom() : pointwise_geom();
  const auto x = random_buffer(x_size(g), 3);
  const auto w = random_buffer(static_cast<std::size_t>(g.out_ch) * g.in_ch * g.kernel * g.kernel, 4);
  const auto b = random_buffer(static_cast<std::size_t>(g.out_ch), 5);
  const std::size_t ysz = static_cast<std::size_t>(g.batch) * g.out_ch * g.out_h() * g.out_w();
  std::vector<double> y(ysz), dx(x.size()), dw(w.size()), db(b.size());
  const auto dy = random_buffer(ysz, 6);
  for (auto _ : state) {
    if constexpr (Parallel) {
      par::conv2d_forward(g, x, w, b, y);
      par::conv2d_backward(g, x, w, dy, dx, dw, db);
    } else {
      ref::conv2d_forward(g, x, w, b, y);
      ref::conv2d_backward(g, x, w, dy, dx, dw, db);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Parallel>
void BM_Depthwise(benchmark::State& state) {
  const DepthwiseGeom g = depthwise_geom();
  const auto x = random_buffer(static_cast<std::size_t>(g.batch) * g.ch * g.in_h * g.in_w, 7);
  const auto w = random_buffer(static_cast<std::size_t>(g.ch) * g.kernel * g.kernel, 8);
  const auto b = random_buffer(static_cast<std::size_t>(g.ch), 9);
  const std::size_t ysz = static_cast<std::size_t>(g.batch) * g.ch * g.out_h() * g.out_w();
  std::vector<double> y(ysz), dx(x.size()), dw(w.size()), db(b.size());
  const auto dy = random_buffer(ysz, 10);
  for (auto _ : state) {
    if constexpr (Parallel) {
      par::depthwise_conv2d_forward(g, x, w, b, y);
      par::depthwise_conv2d_backward(g, x, w, dy, dx, dw, db);
    } else {
      ref::depthwise_conv2d_forward(g, x, w, b, y);
      ref::depthwise_conv2d_backward(g, x, w, dy, dx, dw, db);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Parallel>
void BM_ConvTranspose(benchmark::State& state) {
  const TransposeGeom g = transpose_geom();
  const auto x = random_buffer(x_size(g), 11);
  const auto w = random_buffer(static_cast<std::size_t>(g.in_ch) * g.out_ch * g.kernel * g.kernel, 12);
  const auto b = random_buffer(static_cast<std::size_t>(g.out_ch), 13);
  const std::size_t ysz = static_cast<std::size_t>(g.batch) * g.out_ch * g.out_h() * g.out_w();
  std::vector<double> y(ysz), dx(x.size()), dw(w.size()), db(b.size());
  const auto dy = random_buffer(ysz, 14);
  for (auto _ : state) {
    if constexpr (Parallel) {
      par::conv_transpose2d_forward(g, x, w, b, y);
      par::conv_transpose2d_backward(g, x, w, dy, dx, dw, db);
    } else {
      ref::conv_transpose2d_forward(g, x, w, b, y);
      ref::conv_transpose2d_backward(g, x, w, dy, dx, dw, db);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/ref")->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gemm<true>)->Name("gemm/par")->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2d<false>)->Name("conv2d_fwd_bwd/ref")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2d<true>)->Name("conv2d_fwd_bwd/par")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Depthwise<false>)->Name("depthwise7x7_fwd_bwd/ref")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Depthwise<true>)->Name("depthwise7x7_fwd_bwd/par")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTranspose<false>)->Name("conv_transpose_fwd_bwd/ref")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTranspose<true>)->Name("conv_transpose_fwd_bwd/par")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
