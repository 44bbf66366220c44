#pragma once

#include <cstddef>

namespace ccodec::nn {

// C[m x n] += A[m x k] * B[k x n], all row-major with explicit leading dims.
//
// Every output element is accumulated with a single fused-multiply-add chain
// over k = 0 .. k-1, independent of m, n, blocking or position in the tile.
// Streaming and one-shot paths therefore produce bit-identical results.
template <class T>
void gemm_acc(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc);

// Same contract with A read transposed: A is stored as k x m (lda >= m).
template <class T>
void gemm_acc_at(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc);

// Same contract with B read transposed: B is stored as n x k (ldb >= k).
template <class T>
void gemm_acc_bt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc);

} // namespace ccodec::nn
