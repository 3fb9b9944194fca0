#pragma once

namespace zsmt::kernels {

// Row-major GEMM kernels. The unsuffixed entry points parallelize over output
// rows with OpenMP; each output element is still accumulated by a single
// thread in a fixed order, so results are bitwise identical to the serial
// reference for any thread count. `acc` accumulates into C instead of
// overwriting it.
//
//   gemm_nn: C[m,n] (+)= A[m,k] * B[k,n]
//   gemm_nt: C[m,n] (+)= A[m,k] * B[n,k]^T
//   gemm_tn: C[m,n] (+)= A[k,m]^T * B[k,n]
//
// The bgemm_* variants apply the same contraction to `batch` consecutive
// matrices (A, B, and C are each stored back to back).

void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);

void bgemm_nn(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);
void bgemm_nt(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);
void bgemm_tn(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);

// Serial reference implementations, kept for the bitwise-equivalence tests
// and the kernel benchmark.
namespace serial {
void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);
void bgemm_nn(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);
void bgemm_nt(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);
void bgemm_tn(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc = false);
}  // namespace serial

}  // namespace zsmt::kernels
