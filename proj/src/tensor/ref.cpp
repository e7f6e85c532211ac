#include "segicl/ref.hpp"

#include <cmath>

namespace segicl::ref {

void gemm(const double* a, const double* b, double* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int l = 0; l < k; ++l)
                acc += a[static_cast<long>(i) * k + l] * b[static_cast<long>(l) * n + j];
            c[static_cast<long>(i) * n + j] = acc;
        }
    }
}

void conv2d_3x3(const double* x, const double* w, double* y, int b, int c, int h,
                int wd, int o) {
    const long hw = static_cast<long>(h) * wd;
    for (int bi = 0; bi < b; ++bi) {
        for (int oi = 0; oi < o; ++oi) {
            for (int yy = 0; yy < h; ++yy) {
                for (int xx = 0; xx < wd; ++xx) {
                    double acc = 0.0;
                    for (int ci = 0; ci < c; ++ci) {
                        for (int ky = 0; ky < 3; ++ky) {
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sy = yy + ky - 1, sx = xx + kx - 1;
                                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                                acc += x[(static_cast<long>(bi) * c + ci) * hw +
                                         static_cast<long>(sy) * wd + sx] *
                                       w[((static_cast<long>(oi) * c + ci) * 3 + ky) * 3 +
                                         kx];
                            }
                        }
                    }
                    y[(static_cast<long>(bi) * o + oi) * hw + static_cast<long>(yy) * wd +
                      xx] = acc;
                }
            }
        }
    }
}

void softmax(const double* x, double* y, int n) {
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - mx);
        s += y[i];
    }
    for (int i = 0; i < n; ++i) y[i] /= s;
}

void layer_norm(const double* x, const double* gain, const double* bias, double* y,
                int n, double eps) {
    double mu = 0.0;
    for (int i = 0; i < n; ++i) mu += x[i];
    mu /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int i = 0; i < n; ++i) y[i] = (x[i] - mu) * inv * gain[i] + bias[i];
}

double mse(const double* a, const double* b, long n) {
    double acc = 0.0;
    for (long i = 0; i < n; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(n);
}

}  // namespace segicl::ref
