#include "zsmt/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace zsmt::kernels {

namespace {
// Below this many multiply-adds the OpenMP fork/join overhead dominates.
constexpr int64_t kParallelThreshold = 1 << 16;

inline void row_nn(int n, int k, const float* arow, const float* b, float* crow, bool acc) {
  if (!acc) std::fill(crow, crow + n, 0.0f);
  for (int r = 0; r < k; ++r) {
    const float av = arow[r];
    const float* brow = b + static_cast<int64_t>(r) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void row_nt(int n, int k, const float* arow, const float* b, float* crow, bool acc) {
  for (int j = 0; j < n; ++j) {
    const float* brow = b + static_cast<int64_t>(j) * k;
    float sum = 0.0f;
    for (int r = 0; r < k; ++r) sum += arow[r] * brow[r];
    crow[j] = acc ? crow[j] + sum : sum;
  }
}

// Output row i of C[m,n] = A[k,m]^T B[k,n]: walks column i of A.
inline void row_tn(int i, int m, int n, int k, const float* a, const float* b, float* crow,
                   bool acc) {
  if (!acc) std::fill(crow, crow + n, 0.0f);
  for (int r = 0; r < k; ++r) {
    const float av = a[static_cast<int64_t>(r) * m + i];
    const float* brow = b + static_cast<int64_t>(r) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}
}  // namespace

void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  const int64_t work = static_cast<int64_t>(m) * n * k;
#pragma omp parallel for schedule(static) if (work >= kParallelThreshold)
  for (int i = 0; i < m; ++i) {
    row_nn(n, k, a + static_cast<int64_t>(i) * k, b, c + static_cast<int64_t>(i) * n, acc);
  }
}

void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  const int64_t work = static_cast<int64_t>(m) * n * k;
#pragma omp parallel for schedule(static) if (work >= kParallelThreshold)
  for (int i = 0; i < m; ++i) {
    row_nt(n, k, a + static_cast<int64_t>(i) * k, b, c + static_cast<int64_t>(i) * n, acc);
  }
}

void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  const int64_t work = static_cast<int64_t>(m) * n * k;
#pragma omp parallel for schedule(static) if (work >= kParallelThreshold)
  for (int i = 0; i < m; ++i) {
    row_tn(i, m, n, k, a, b, c + static_cast<int64_t>(i) * n, acc);
  }
}

void bgemm_nn(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  const int64_t work = static_cast<int64_t>(batch) * m * n * k;
  const int64_t sa = static_cast<int64_t>(m) * k, sb = static_cast<int64_t>(k) * n,
                sc = static_cast<int64_t>(m) * n;
#pragma omp parallel for collapse(2) schedule(static) if (work >= kParallelThreshold)
  for (int bi = 0; bi < batch; ++bi) {
    for (int i = 0; i < m; ++i) {
      row_nn(n, k, a + bi * sa + static_cast<int64_t>(i) * k, b + bi * sb,
             c + bi * sc + static_cast<int64_t>(i) * n, acc);
    }
  }
}

void bgemm_nt(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  const int64_t work = static_cast<int64_t>(batch) * m * n * k;
  const int64_t sa = static_cast<int64_t>(m) * k, sb = static_cast<int64_t>(n) * k,
                sc = static_cast<int64_t>(m) * n;
#pragma omp parallel for collapse(2) schedule(static) if (work >= kParallelThreshold)
  for (int bi = 0; bi < batch; ++bi) {
    for (int i = 0; i < m; ++i) {
      row_nt(n, k, a + bi * sa + static_cast<int64_t>(i) * k, b + bi * sb,
             c + bi * sc + static_cast<int64_t>(i) * n, acc);
    }
  }
}

void bgemm_tn(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  const int64_t work = static_cast<int64_t>(batch) * m * n * k;
  const int64_t sa = static_cast<int64_t>(k) * m, sb = static_cast<int64_t>(k) * n,
                sc = static_cast<int64_t>(m) * n;
#pragma omp parallel for collapse(2) schedule(static) if (work >= kParallelThreshold)
  for (int bi = 0; bi < batch; ++bi) {
    for (int i = 0; i < m; ++i) {
      row_tn(i, m, n, k, a + bi * sa, b + bi * sb, c + bi * sc + static_cast<int64_t>(i) * n, acc);
    }
  }
}

namespace serial {

void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  for (int i = 0; i < m; ++i) {
    row_nn(n, k, a + static_cast<int64_t>(i) * k, b, c + static_cast<int64_t>(i) * n, acc);
  }
}

void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  for (int i = 0; i < m; ++i) {
    row_nt(n, k, a + static_cast<int64_t>(i) * k, b, c + static_cast<int64_t>(i) * n, acc);
  }
}

void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  for (int i = 0; i < m; ++i) {
    row_tn(i, m, n, k, a, b, c + static_cast<int64_t>(i) * n, acc);
  }
}

void bgemm_nn(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  const int64_t sa = static_cast<int64_t>(m) * k, sb = static_cast<int64_t>(k) * n,
                sc = static_cast<int64_t>(m) * n;
  for (int bi = 0; bi < batch; ++bi) gemm_nn(m, n, k, a + bi * sa, b + bi * sb, c + bi * sc, acc);
}

void bgemm_nt(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  const int64_t sa = static_cast<int64_t>(m) * k, sb = static_cast<int64_t>(n) * k,
                sc = static_cast<int64_t>(m) * n;
  for (int bi = 0; bi < batch; ++bi) gemm_nt(m, n, k, a + bi * sa, b + bi * sb, c + bi * sc, acc);
}

void bgemm_tn(int batch, int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  const int64_t sa = static_cast<int64_t>(k) * m, sb = static_cast<int64_t>(k) * n,
                sc = static_cast<int64_t>(m) * n;
  for (int bi = 0; bi < batch; ++bi) gemm_tn(m, n, k, a + bi * sa, b + bi * sb, c + bi * sc, acc);
}

}  // namespace serial

}  // namespace zsmt::kernels
