#include "splab/kernels.hpp"

#include <cmath>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "splab/error.hpp"

namespace splab::kernels {

namespace {

// Work below this many multiply-adds is not worth a parallel region.
constexpr int64_t kParallelFlopCutoff = 1 << 15;

// Fixed chunk length for reductions. The chunk grid depends only on n, so
// serial and parallel flavors produce the same partials in the same order.
constexpr size_t kChunk = 4096;

inline void gemm_nn_row(const float* a, const float* b, float* c, int i, int k, int n,
                        bool accumulate, double* acc) {
  for (int j = 0; j < n; ++j) acc[j] = accumulate ? static_cast<double>(c[i * n + j]) : 0.0;
  for (int p = 0; p < k; ++p) {
    const double av = a[static_cast<size_t>(i) * k + p];
    const float* brow = b + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) acc[j] += av * brow[j];
  }
  for (int j = 0; j < n; ++j) c[static_cast<size_t>(i) * n + j] = static_cast<float>(acc[j]);
}

inline void gemm_nt_row(const float* a, const float* b, float* c, int i, int k, int n,
                        bool accumulate) {
  const float* arow = a + static_cast<size_t>(i) * k;
  for (int j = 0; j < n; ++j) {
    const float* brow = b + static_cast<size_t>(j) * k;
    double acc = accumulate ? static_cast<double>(c[static_cast<size_t>(i) * n + j]) : 0.0;
    for (int p = 0; p < k; ++p) acc += static_cast<double>(arow[p]) * brow[p];
    c[static_cast<size_t>(i) * n + j] = static_cast<float>(acc);
  }
}

inline void gemm_tn_row(const float* a, const float* b, float* c, int i, int m, int k, int n,
                        bool accumulate, double* acc) {
  for (int j = 0; j < n; ++j) acc[j] = accumulate ? static_cast<double>(c[static_cast<size_t>(i) * n + j]) : 0.0;
  for (int p = 0; p < k; ++p) {
    const double av = a[static_cast<size_t>(p) * m + i];
    const float* brow = b + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) acc[j] += av * brow[j];
  }
  for (int j = 0; j < n; ++j) c[static_cast<size_t>(i) * n + j] = static_cast<float>(acc[j]);
}

template <typename ChunkFn>
double chunked_reduce(size_t n, ChunkFn fn, bool parallel) {
  if (n == 0) return 0.0;
  const size_t n_chunks = (n + kChunk - 1) / kChunk;
  if (n_chunks == 1) return fn(0, n);
  std::vector<double> partial(n_chunks);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel && n_chunks > 4)
#endif
  for (int64_t ci = 0; ci < static_cast<int64_t>(n_chunks); ++ci) {
    const size_t lo = static_cast<size_t>(ci) * kChunk;
    const size_t hi = lo + kChunk < n ? lo + kChunk : n;
    partial[static_cast<size_t>(ci)] = fn(lo, hi);
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace

void gemm_nn_serial(const float* a, const float* b, float* c, int m, int k, int n,
                    bool accumulate) {
  std::vector<double> acc(static_cast<size_t>(n));
  for (int i = 0; i < m; ++i) gemm_nn_row(a, b, c, i, k, n, accumulate, acc.data());
}

void gemm_nn(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  const int64_t flops = static_cast<int64_t>(m) * k * n;
  if (flops < kParallelFlopCutoff || m == 1) {
    gemm_nn_serial(a, b, c, m, k, n, accumulate);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel
  {
    std::vector<double> acc(static_cast<size_t>(n));
#pragma omp for schedule(static)
    for (int i = 0; i < m; ++i) gemm_nn_row(a, b, c, i, k, n, accumulate, acc.data());
  }
#else
  gemm_nn_serial(a, b, c, m, k, n, accumulate);
#endif
}

void gemm_nt_serial(const float* a, const float* b, float* c, int m, int k, int n,
                    bool accumulate) {
  for (int i = 0; i < m; ++i) gemm_nt_row(a, b, c, i, k, n, accumulate);
}

void gemm_nt(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  const int64_t flops = static_cast<int64_t>(m) * k * n;
  if (flops < kParallelFlopCutoff || m == 1) {
    gemm_nt_serial(a, b, c, m, k, n, accumulate);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) gemm_nt_row(a, b, c, i, k, n, accumulate);
#else
  gemm_nt_serial(a, b, c, m, k, n, accumulate);
#endif
}

void gemm_tn_serial(const float* a, const float* b, float* c, int m, int k, int n,
                    bool accumulate) {
  std::vector<double> acc(static_cast<size_t>(n));
  for (int i = 0; i < m; ++i) gemm_tn_row(a, b, c, i, m, k, n, accumulate, acc.data());
}

void gemm_tn(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  const int64_t flops = static_cast<int64_t>(m) * k * n;
  if (flops < kParallelFlopCutoff || m == 1) {
    gemm_tn_serial(a, b, c, m, k, n, accumulate);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel
  {
    std::vector<double> acc(static_cast<size_t>(n));
#pragma omp for schedule(static)
    for (int i = 0; i < m; ++i) gemm_tn_row(a, b, c, i, m, k, n, accumulate, acc.data());
  }
#else
  gemm_tn_serial(a, b, c, m, k, n, accumulate);
#endif
}

double sum_serial(const float* x, size_t n) {
  return chunked_reduce(
      n,
      [&](size_t lo, size_t hi) {
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += x[i];
        return s;
      },
      false);
}

double sum(const float* x, size_t n) {
  return chunked_reduce(
      n,
      [&](size_t lo, size_t hi) {
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += x[i];
        return s;
      },
      true);
}

double sum_sq_serial(const float* x, size_t n) {
  return chunked_reduce(
      n,
      [&](size_t lo, size_t hi) {
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += static_cast<double>(x[i]) * x[i];
        return s;
      },
      false);
}

double sum_sq(const float* x, size_t n) {
  return chunked_reduce(
      n,
      [&](size_t lo, size_t hi) {
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += static_cast<double>(x[i]) * x[i];
        return s;
      },
      true);
}

double sum_abs_serial(const float* x, size_t n) {
  return chunked_reduce(
      n,
      [&](size_t lo, size_t hi) {
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += std::fabs(static_cast<double>(x[i]));
        return s;
      },
      false);
}

double sum_abs(const float* x, size_t n) {
  return chunked_reduce(
      n,
      [&](size_t lo, size_t hi) {
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += std::fabs(static_cast<double>(x[i]));
        return s;
      },
      true);
}

double dot_serial(const float* a, const float* b, size_t n) {
  return chunked_reduce(
      n,
      [&](size_t lo, size_t hi) {
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += static_cast<double>(a[i]) * b[i];
        return s;
      },
      false);
}

double dot(const float* a, const float* b, size_t n) {
  return chunked_reduce(
      n,
      [&](size_t lo, size_t hi) {
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += static_cast<double>(a[i]) * b[i];
        return s;
      },
      true);
}

void axpy(float alpha, const float* x, float* y, size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 1u << 16)
#endif
  for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) y[i] += alpha * x[i];
}

void scale_inplace(float* x, float alpha, size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 1u << 16)
#endif
  for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) x[i] *= alpha;
}

bool all_finite(const float* x, size_t n) {
  bool ok = true;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(&& : ok) if (n > 1u << 16)
#endif
  for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) ok = ok && std::isfinite(x[i]);
  return ok;
}

void check_finite(const float* x, size_t n, const char* what) {
  if (!all_finite(x, n))
    throw NumericError(std::string("non-finite values in ") + what);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace splab::kernels
