// Serial reference vs OpenMP kernels. Set OMP_NUM_THREADS to vary the
// parallel side.

#include <benchmark/benchmark.h>

#include <vector>

#include "fl/kernels.hpp"
#include "fl/rng.hpp"

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  fl::Xoshiro256 rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      fl::kernels::gemm(a, b, c, n, n, n);
    } else {
      fl::serial::gemm(a, b, c, n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

// FedAvg inner loop: accumulate 10 client models into one buffer.
template <bool Parallel>
void BM_Aggregate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<double>> models;
  for (std::uint64_t k = 0; k < 10; ++k) models.push_back(random_vector(n, 10 + k));
  std::vector<double> acc(n);
  for (auto _ : state) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < models.size(); ++k) {
      const double w = static_cast<double>(k + 1);
      if constexpr (Parallel) {
        fl::kernels::weighted_accumulate(acc, models[k], w);
      } else {
        fl::serial::weighted_accumulate(acc, models[k], w);
      }
    }
    if constexpr (Parallel) {
      fl::kernels::divide(acc, 55.0);
    } else {
      fl::serial::divide(acc, 55.0);
    }
    benchmark::DoNotOptimize(acc.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(10 * n * sizeof(double)));
}

template <bool Parallel>
void BM_SquaredDistance(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n, 3), b = random_vector(n, 4);
  for (auto _ : state) {
    double d = Parallel ? fl::kernels::squared_distance(a, b) : fl::serial::squared_distance(a, b);
    benchmark::DoNotOptimize(d);
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * sizeof(double)));
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_Aggregate<false>)->Name("aggregate/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Aggregate<true>)->Name("aggregate/omp")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_SquaredDistance<false>)->Name("squared_distance/serial")->Arg(1 << 20);
BENCHMARK(BM_SquaredDistance<true>)->Name("squared_distance/omp")->Arg(1 << 20);

BENCHMARK_MAIN();
