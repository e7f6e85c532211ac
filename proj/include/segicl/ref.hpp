#pragma once

namespace segicl::ref {

// Naive serial 64-bit reference implementations. These share no code with the
// OpenMP kernels; tests hold the fast path to them and the benchmark target
// times one against the other.

// C = A[m,k] * B[k,n], plain triple loop.
void gemm(const double* a, const double* b, double* c, int m, int n, int k);

// Direct 6-loop 3x3 convolution, stride 1, zero padding 1.
void conv2d_3x3(const double* x, const double* w, double* y, int b, int c, int h,
                int wd, int o);

void softmax(const double* x, double* y, int n);

void layer_norm(const double* x, const double* gain, const double* bias, double* y,
                int n, double eps);

double mse(const double* a, const double* b, long n);

}  // namespace segicl::ref
