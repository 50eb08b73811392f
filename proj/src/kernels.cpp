#include "fl/kernels.hpp"

#include <algorithm>
#include <vector>

namespace fl::kernels {

namespace {
constexpr std::size_t kBlock = 4096;

bool worth_it(std::size_t work) { return work >= kParallelThreshold; }
}  // namespace

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m, std::size_t k,
          std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (worth_it(m * k * n))
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* out = c.data() + i * n;
    std::fill(out, out + n, 0.0);
    // i-p-j order streams rows of b; each out[j] still accumulates p = 0..k-1 in order.
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (worth_it(m * k * n))
  for (std::ptrdiff_t pp = 0; pp < rows; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    double* out = c.data() + p * n;
    std::fill(out, out + n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      const double* brow = b.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m, std::size_t n,
             std::size_t k) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (worth_it(m * k * n))
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = a.data() + i * n;
    for (std::size_t q = 0; q < k; ++q) {
      const double* brow = b.data() + q * n;
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += arow[j] * brow[j];
      c[i * k + q] = sum;
    }
  }
}

namespace {
template <class T>
void accumulate_impl(std::span<double> acc, std::span<const T> x, double weight) {
  const auto n = static_cast<std::ptrdiff_t>(acc.size());
  double* out = acc.data();
  const T* in = x.data();
#pragma omp parallel for simd schedule(static) if (worth_it(acc.size()))
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] += weight * static_cast<double>(in[i]);
}
}  // namespace

void weighted_accumulate(std::span<double> acc, std::span<const double> x, double weight) {
  accumulate_impl(acc, x, weight);
}

void weighted_accumulate(std::span<double> acc, std::span<const float> x, double weight) {
  accumulate_impl(acc, x, weight);
}

void divide(std::span<double> acc, double divisor) {
  const auto n = static_cast<std::ptrdiff_t>(acc.size());
  double* out = acc.data();
#pragma omp parallel for simd schedule(static) if (worth_it(acc.size()))
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] /= divisor;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(y.size());
  double* out = y.data();
  const double* in = x.data();
#pragma omp parallel for simd schedule(static) if (worth_it(y.size()))
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] += alpha * in[i];
}

namespace {
// Partial sums over fixed blocks, combined in block order: the result does
// not depend on the thread count.
template <class F>
double blocked_sum(std::size_t n, F&& term) {
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(blocks, 0.0);
  const auto nb = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static) if (worth_it(n))
  for (std::ptrdiff_t bb = 0; bb < nb; ++bb) {
    const std::size_t lo = static_cast<std::size_t>(bb) * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += term(i);
    partial[static_cast<std::size_t>(bb)] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}
}  // namespace

double squared_distance(std::span<const double> a, std::span<const double> b) {
  return blocked_sum(a.size(), [&](std::size_t i) {
    const double d = a[i] - b[i];
    return d * d;
  });
}

double squared_norm(std::span<const double> x) {
  return blocked_sum(x.size(), [&](std::size_t i) { return x[i] * x[i]; });
}

}  // namespace fl::kernels
