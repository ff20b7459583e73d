// SPDX-License-Identifier: Apache-2.0

// Microbenchmarks pairing each parallel kernel with its serial reference
// twin. The two are bit-identical in output, so the only interesting axis
// is throughput; run with --benchmark_filter to narrow the set.

#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "ddpm/kernels.hpp"
#include "ddpm/rng.hpp"

namespace {

using ddpm::Rng;
namespace k = ddpm::kernels;

std::vector<double> random_vec(std::size_t len, std::uint64_t seed) {
  std::vector<double> v(len);
  k::ref::fill_normal(v.data(), len, 1, Rng(seed));
  return v;
}

template <bool Parallel>
void BM_affine_batch(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const std::size_t in = 64, out = 64;
  const auto W = random_vec(in * out, 1);
  const auto b = random_vec(out, 2);
  const auto x = random_vec(n * in, 3);
  std::vector<double> y(n * out);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::affine_batch(y.data(), W.data(), b.data(), x.data(), n, in, out);
    else
      k::ref::affine_batch(y.data(), W.data(), b.data(), x.data(), n, in,
                           out);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n * in * out));
}

template <bool Parallel>
void BM_affine_backward_params(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const std::size_t in = 64, out = 64;
  const auto x = random_vec(n * in, 4);
  const auto dy = random_vec(n * out, 5);
  std::vector<double> dW(in * out), db(out);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::affine_backward_params(dW.data(), db.data(), x.data(), dy.data(),
                                n, in, out);
    else
      k::ref::affine_backward_params(dW.data(), db.data(), x.data(),
                                     dy.data(), n, in, out);
    benchmark::DoNotOptimize(dW.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n * in * out));
}

template <bool Parallel>
void BM_silu(benchmark::State& state) {
  const std::size_t len = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(len, 6);
  std::vector<double> y(len);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::silu(y.data(), x.data(), len);
    else
      k::ref::silu(y.data(), x.data(), len);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(len));
}

template <bool Parallel>
void BM_ar1_step(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const std::size_t D = 2;
  const auto x = random_vec(n * D, 7);
  std::vector<double> y(n * D);
  const Rng rng(8);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::ar1_step(y.data(), x.data(), 0.95, 0.3122498999199199, n, D, rng);
    else
      k::ref::ar1_step(y.data(), x.data(), 0.95, 0.3122498999199199, n, D,
                       rng);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n * D));
}

template <bool Parallel>
void BM_mean_var(benchmark::State& state) {
  const std::size_t len = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(len, 9);
  double mean = 0.0, var = 0.0;
  for (auto _ : state) {
    if constexpr (Parallel)
      k::mean_var(x.data(), len, &mean, &var);
    else
      k::ref::mean_var(x.data(), len, &mean, &var);
    benchmark::DoNotOptimize(mean);
    benchmark::DoNotOptimize(var);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(len));
}

}  // namespace

BENCHMARK(BM_affine_batch<true>)->Name("affine_batch/omp")->Arg(256)->Arg(4096);
BENCHMARK(BM_affine_batch<false>)
    ->Name("affine_batch/serial")
    ->Arg(256)
    ->Arg(4096);
BENCHMARK(BM_affine_backward_params<true>)
    ->Name("affine_backward_params/omp")
    ->Arg(256)
    ->Arg(4096);
BENCHMARK(BM_affine_backward_params<false>)
    ->Name("affine_backward_params/serial")
    ->Arg(256)
    ->Arg(4096);
BENCHMARK(BM_silu<true>)->Name("silu/omp")->Arg(1 << 12)->Arg(1 << 18);
BENCHMARK(BM_silu<false>)->Name("silu/serial")->Arg(1 << 12)->Arg(1 << 18);
BENCHMARK(BM_ar1_step<true>)->Name("ar1_step/omp")->Arg(1 << 10)->Arg(1 << 16);
BENCHMARK(BM_ar1_step<false>)
    ->Name("ar1_step/serial")
    ->Arg(1 << 10)
    ->Arg(1 << 16);
BENCHMARK(BM_mean_var<true>)->Name("mean_var/omp")->Arg(1 << 20);
BENCHMARK(BM_mean_var<false>)->Name("mean_var/serial")->Arg(1 << 20);

BENCHMARK_MAIN();
