#pragma once

#include <cstddef>
#include <cstdint>

namespace splab::kernels {

// Dense float32 kernels with double accumulators. Every kernel comes in a
// serial reference flavor and an OpenMP flavor. The two are bit-identical by
// construction: parallel loops only ever split work so that each output
// element is produced by exactly one thread with the same inner summation
// order as the serial code, and global reductions use a fixed chunk grid that
// does not depend on the thread count.

// C[m x n] = A[m x k] * B[k x n]   (+= when accumulate)
void gemm_nn(const float* a, const float* b, float* c, int m, int k, int n,
             bool accumulate = false);
void gemm_nn_serial(const float* a, const float* b, float* c, int m, int k, int n,
                    bool accumulate = false);

// C[m x n] = A[m x k] * B^T, B given as [n x k]
void gemm_nt(const float* a, const float* b, float* c, int m, int k, int n,
             bool accumulate = false);
void gemm_nt_serial(const float* a, const float* b, float* c, int m, int k, int n,
                    bool accumulate = false);

// C[m x n] = A^T * B, A given as [k x m], B as [k x n]
void gemm_tn(const float* a, const float* b, float* c, int m, int k, int n,
             bool accumulate = false);
void gemm_tn_serial(const float* a, const float* b, float* c, int m, int k, int n,
                    bool accumulate = false);

// Deterministic reductions (double result, fixed chunk grid).
double sum(const float* x, size_t n);
double sum_serial(const float* x, size_t n);
double sum_sq(const float* x, size_t n);
double sum_sq_serial(const float* x, size_t n);
double sum_abs(const float* x, size_t n);
double sum_abs_serial(const float* x, size_t n);
double dot(const float* a, const float* b, size_t n);
double dot_serial(const float* a, const float* b, size_t n);

// y += alpha * x
void axpy(float alpha, const float* x, float* y, size_t n);
// x *= alpha
void scale_inplace(float* x, float alpha, size_t n);

// Throws NumericError naming `what` if any element is NaN/Inf.
void check_finite(const float* x, size_t n, const char* what);
bool all_finite(const float* x, size_t n);

// Threads used by the OpenMP flavors (1 when built without OpenMP).
int max_threads();

}  // namespace splab::kernels
