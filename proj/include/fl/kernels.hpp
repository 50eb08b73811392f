#pragma once

#include <cstddef>
#include <span>

// Dense numeric kernels behind aggregation and local training.
//
// Two implementations share one interface: fl::kernels is OpenMP-parallel,
// fl::serial is the straightforward reference kept for tests and the
// benchmark. Parallel loops run over independent output elements and keep
// each element's summation order, so apart from the two reductions the
// two produce bit-identical results at any thread count. squared_distance and
// squared_norm sum fixed-size blocks of 4096, which is deterministic but only
// bit-equal to the naive serial loop below one block.

namespace fl::kernels {

/// c[m x n] = a[m x k] * b[k x n]
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m, std::size_t k,
          std::size_t n);
/// c[k x n] = a^T * b with a[m x k], b[m x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m, std::size_t k,
             std::size_t n);
/// c[m x k] = a * b^T with a[m x n], b[k x n]
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m, std::size_t n,
             std::size_t k);

/// acc[i] += weight * x[i]
void weighted_accumulate(std::span<double> acc, std::span<const double> x, double weight);
void weighted_accumulate(std::span<double> acc, std::span<const float> x, double weight);

/// acc[i] /= divisor
void divide(std::span<double> acc, double divisor);

/// y[i] += alpha * x[i]
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// sum_i (a[i] - b[i])^2
double squared_distance(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> x);

/// Work below this many multiply-adds stays on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

}  // namespace fl::kernels

namespace fl::serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m, std::size_t k,
          std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m, std::size_t n,
             std::size_t k);
void weighted_accumulate(std::span<double> acc, std::span<const double> x, double weight);
void weighted_accumulate(std::span<double> acc, std::span<const float> x, double weight);
void divide(std::span<double> acc, double divisor);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double squared_distance(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> x);

}  // namespace fl::serial
