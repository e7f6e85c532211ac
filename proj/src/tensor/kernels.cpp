#include "segicl/kernels.hpp"

#include <cmath>
#include <vector>

namespace segicl::kern {

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        T* ci = c + static_cast<long>(i) * n;
        const T* ai = a + static_cast<long>(i) * k;
        for (int l = 0; l < k; ++l) {
            const T s = ai[l];
            const T* bl = b + static_cast<long>(l) * n;
            for (int j = 0; j < n; ++j) ci[j] += s * bl[j];
        }
    }
}

template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        T* ci = c + static_cast<long>(i) * n;
        const T* ai = a + static_cast<long>(i) * k;
        for (int j = 0; j < n; ++j) {
            const T* bj = b + static_cast<long>(j) * k;
            T acc = 0;
            for (int l = 0; l < k; ++l) acc += ai[l] * bj[l];
            ci[j] += acc;
        }
    }
}

template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        T* ci = c + static_cast<long>(i) * n;
        for (int l = 0; l < k; ++l) {
            const T s = a[static_cast<long>(l) * m + i];
            const T* bl = b + static_cast<long>(l) * n;
            for (int j = 0; j < n; ++j) ci[j] += s * bl[j];
        }
    }
}

template <typename T>
void im2col3x3(const T* x, int c, int h, int w, T* cols) {
    const long hw = static_cast<long>(h) * w;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const T* xc = x + ch * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = cols + (static_cast<long>(ch) * 9 + ky * 3 + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    T* ry = row + static_cast<long>(y) * w;
                    if (sy < 0 || sy >= h) {
                        for (int xx = 0; xx < w; ++xx) ry[xx] = 0;
                        continue;
                    }
                    const T* sx = xc + static_cast<long>(sy) * w;
                    for (int xx = 0; xx < w; ++xx) {
                        const int col = xx + kx - 1;
                        ry[xx] = (col < 0 || col >= w) ? T(0) : sx[col];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im3x3_add(const T* cols, int c, int h, int w, T* dx) {
    const long hw = static_cast<long>(h) * w;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        T* dc = dx + ch * hw;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                T acc = 0;
                for (int ky = 0; ky < 3; ++ky) {
                    const int oy = y - ky + 1;
                    if (oy < 0 || oy >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ox = xx - kx + 1;
                        if (ox < 0 || ox >= w) continue;
                        acc += cols[(static_cast<long>(ch) * 9 + ky * 3 + kx) * hw +
                                    static_cast<long>(oy) * w + ox];
                    }
                }
                dc[static_cast<long>(y) * w + xx] += acc;
            }
        }
    }
}

template <typename T>
void softmax_strided(const T* x, T* y, long outer, int n, long inner) {
    const long rows = outer * inner;
#pragma omp parallel for schedule(static)
    for (long r = 0; r < rows; ++r) {
        const long o = r / inner, i = r % inner;
        const T* xr = x + o * n * inner + i;
        T* yr = y + o * n * inner + i;
        T mx = xr[0];
        for (int j = 1; j < n; ++j) mx = xr[static_cast<long>(j) * inner] > mx ? xr[static_cast<long>(j) * inner] : mx;
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            const T e = std::exp(xr[static_cast<long>(j) * inner] - mx);
            yr[static_cast<long>(j) * inner] = e;
            s += static_cast<double>(e);
        }
        const T invs = static_cast<T>(1.0 / s);
        for (int j = 0; j < n; ++j) yr[static_cast<long>(j) * inner] *= invs;
    }
}

template <typename T>
void softmax_backward_strided(const T* y, const T* gy, T* gx, long outer, int n,
                              long inner) {
    const long rows = outer * inner;
#pragma omp parallel for schedule(static)
    for (long r = 0; r < rows; ++r) {
        const long o = r / inner, i = r % inner;
        const T* yr = y + o * n * inner + i;
        const T* gr = gy + o * n * inner + i;
        T* xr = gx + o * n * inner + i;
        double dot = 0.0;
        for (int j = 0; j < n; ++j)
            dot += static_cast<double>(gr[static_cast<long>(j) * inner]) *
                   static_cast<double>(yr[static_cast<long>(j) * inner]);
        const T d = static_cast<T>(dot);
        for (int j = 0; j < n; ++j) {
            const long k = static_cast<long>(j) * inner;
            xr[k] += yr[k] * (gr[k] - d);
        }
    }
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, long rows,
                     int n, T eps) {
#pragma omp parallel for schedule(static)
    for (long r = 0; r < rows; ++r) {
        const T* xr = x + r * n;
        T* yr = y + r * n;
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += static_cast<double>(xr[j]);
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = static_cast<double>(xr[j]) - mu;
            var += d * d;
        }
        var /= n;
        const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        const T mean = static_cast<T>(mu);
        for (int j = 0; j < n; ++j)
            yr[j] = (xr[j] - mean) * inv * gain[j] + bias[j];
    }
}

template <typename T>
void layer_norm_backward_rows(const T* x, const T* gain, const T* gy, T* gx,
                              T* ggain, T* gbias, long rows, int n, T eps,
                              bool need_gx, bool need_gaff) {
    std::vector<double> mu(rows), inv(rows);
#pragma omp parallel for schedule(static)
    for (long r = 0; r < rows; ++r) {
        const T* xr = x + r * n;
        double m = 0.0;
        for (int j = 0; j < n; ++j) m += static_cast<double>(xr[j]);
        m /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = static_cast<double>(xr[j]) - m;
            var += d * d;
        }
        var /= n;
        mu[r] = m;
        inv[r] = 1.0 / std::sqrt(var + static_cast<double>(eps));
    }
    if (need_gx) {
#pragma omp parallel for schedule(static)
        for (long r = 0; r < rows; ++r) {
            const T* xr = x + r * n;
            const T* gr = gy + r * n;
            T* dr = gx + r * n;
            double su = 0.0, sux = 0.0;
            for (int j = 0; j < n; ++j) {
                const double xh = (static_cast<double>(xr[j]) - mu[r]) * inv[r];
                const double u = static_cast<double>(gr[j]) * static_cast<double>(gain[j]);
                su += u;
                sux += u * xh;
            }
            su /= n;
            sux /= n;
            for (int j = 0; j < n; ++j) {
                const double xh = (static_cast<double>(xr[j]) - mu[r]) * inv[r];
                const double u = static_cast<double>(gr[j]) * static_cast<double>(gain[j]);
                dr[j] += static_cast<T>(inv[r] * (u - su - xh * sux));
            }
        }
    }
    if (need_gaff) {
        // Column-parallel so the shared gain/bias grads see no races; rows are
        // folded in index order.
#pragma omp parallel for schedule(static)
        for (int j = 0; j < n; ++j) {
            double dg = 0.0, db = 0.0;
            for (long r = 0; r < rows; ++r) {
                const double xh = (static_cast<double>(x[r * n + j]) - mu[r]) * inv[r];
                dg += static_cast<double>(gy[r * n + j]) * xh;
                db += static_cast<double>(gy[r * n + j]);
            }
            ggain[j] += static_cast<T>(dg);
            gbias[j] += static_cast<T>(db);
        }
    }
}

#define SEGICL_INSTANTIATE_KERNELS(T)                                              \
    template void gemm_nn<T>(int, int, int, const T*, const T*, T*);               \
    template void gemm_nt<T>(int, int, int, const T*, const T*, T*);               \
    template void gemm_tn<T>(int, int, int, const T*, const T*, T*);               \
    template void im2col3x3<T>(const T*, int, int, int, T*);                       \
    template void col2im3x3_add<T>(const T*, int, int, int, T*);                   \
    template void softmax_strided<T>(const T*, T*, long, int, long);               \
    template void softmax_backward_strided<T>(const T*, const T*, T*, long, int,   \
                                              long);                               \
    template void layer_norm_rows<T>(const T*, const T*, const T*, T*, long, int,  \
                                     T);                                           \
    template void layer_norm_backward_rows<T>(const T*, const T*, const T*, T*,    \
                                              T*, T*, long, int, T, bool, bool);

SEGICL_INSTANTIATE_KERNELS(float)
SEGICL_INSTANTIATE_KERNELS(double)

#undef SEGICL_INSTANTIATE_KERNELS

}  // namespace segicl::kern
