#pragma once

namespace segicl::kern {

// OpenMP-parallel compute kernels. Every kernel partitions work so that each
// output element is accumulated sequentially, in a fixed order, by exactly
// one thread; results are therefore bit-identical for any team size.
// All gemm variants accumulate (C += ...), matching gradient semantics.

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c);

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c);

// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c);

// 3x3, stride 1, zero padding 1. cols is [C*9, H*W] with row index
// c*9 + ky*3 + kx.
template <typename T>
void im2col3x3(const T* x, int c, int h, int w, T* cols);

// Gather-form adjoint of im2col3x3: dx[c,y,x] += sum of the col entries that
// read that pixel. Parallel over pixels, so no scatter races.
template <typename T>
void col2im3x3_add(const T* cols, int c, int h, int w, T* dx);

// Max-subtracted softmax over the length-n axis at stride `inner`.
template <typename T>
void softmax_strided(const T* x, T* y, long outer, int n, long inner);

template <typename T>
void softmax_backward_strided(const T* y, const T* gy, T* gx, long outer, int n,
                              long inner);

// Normalizes the contiguous last axis of length n; row statistics use double
// accumulators.
template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, long rows,
                     int n, T eps);

template <typename T>
void layer_norm_backward_rows(const T* x, const T* gain, const T* gy, T* gx,
                              T* ggain, T* gbias, long rows, int n, T eps,
                              bool need_gx, bool need_gaff);

}  // namespace segicl::kern
