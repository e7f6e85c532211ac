// Times the OpenMP kernels against the serial double references and checks
// they agree. Exits nonzero if any pair disagrees, so the benchmark doubles
// as an end-to-end kernel cross-check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "segicl/kernels.hpp"
#include "segicl/ref.hpp"
#include "segicl/rng.hpp"
#include "segicl/threads.hpp"

using segicl::Rng;

namespace {

std::vector<double> randn(Rng& rng, long n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.normal();
    return v;
}

template <typename F>
double best_ms(F&& fn, int reps) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best,
                        std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool g_ok = true;

void report(const char* name, double flops, double serial_ms, double omp_ms,
            double diff) {
    const bool ok = diff < 1e-8;
    g_ok = g_ok && ok;
    std::printf("%-14s %10.2f ms %10.2f ms %7.2fx %9.2f GF/s  %.2e %s\n", name,
                serial_ms, omp_ms, serial_ms / omp_ms,
                flops / (omp_ms * 1e6), diff, ok ? "ok" : "MISMATCH");
}

void bench_gemm(Rng& rng, int reps) {
    const int m = 384, n = 384, k = 384;
    const auto a = randn(rng, static_cast<long>(m) * k);
    const auto b = randn(rng, static_cast<long>(k) * n);
    std::vector<double> c_ref(static_cast<std::size_t>(m) * n);
    std::vector<double> c_omp(c_ref.size());

    const double serial =
        best_ms([&] { segicl::ref::gemm(a.data(), b.data(), c_ref.data(), m, n, k); },
                reps);
    const double omp = best_ms(
        [&] {
            std::fill(c_omp.begin(), c_omp.end(), 0.0);
            segicl::kern::gemm_nn(m, n, k, a.data(), b.data(), c_omp.data());
        },
        reps);
    report("gemm 384^3", 2.0 * m * n * k, serial, omp, max_abs_diff(c_ref, c_omp));
}

void bench_conv(Rng& rng, int reps) {
    const int B = 8, C = 32, H = 32, W = 32, O = 32;
    const long hw = static_cast<long>(H) * W;
    const long c9 = static_cast<long>(C) * 9;
    const auto x = randn(rng, B * C * hw);
    const auto w = randn(rng, static_cast<long>(O) * c9);
    std::vector<double> y_ref(static_cast<std::size_t>(B) * O * hw);
    std::vector<double> y_omp(y_ref.size());
    std::vector<double> cols(static_cast<std::size_t>(c9) * hw);

    const double serial = best_ms(
        [&] { segicl::ref::conv2d_3x3(x.data(), w.data(), y_ref.data(), B, C, H, W, O); },
        reps);
    const double omp = best_ms(
        [&] {
            std::fill(y_omp.begin(), y_omp.end(), 0.0);
            for (int bi = 0; bi < B; ++bi) {
                segicl::kern::im2col3x3(x.data() + bi * C * hw, C, H, W, cols.data());
                segicl::kern::gemm_nn(O, static_cast<int>(hw), static_cast<int>(c9),
                                      w.data(), cols.data(), y_omp.data() + bi * O * hw);
            }
        },
        reps);
    report("conv3x3", 2.0 * B * O * c9 * hw, serial, omp, max_abs_diff(y_ref, y_omp));
}

void bench_softmax(Rng& rng, int reps) {
    const long rows = 8192;
    const int n = 256;
    const auto x = randn(rng, rows * n);
    std::vector<double> y_ref(x.size()), y_omp(x.size());

    const double serial = best_ms(
        [&] {
            for (long r = 0; r < rows; ++r)
                segicl::ref::softmax(x.data() + r * n, y_ref.data() + r * n, n);
        },
        reps);
    const double omp = best_ms(
        [&] { segicl::kern::softmax_strided(x.data(), y_omp.data(), rows, n, 1); },
        reps);
    report("softmax rows", 5.0 * rows * n, serial, omp, max_abs_diff(y_ref, y_omp));
}

void bench_layer_norm(Rng& rng, int reps) {
    const long rows = 8192;
    const int n = 256;
    const auto x = randn(rng, rows * n);
    const auto gain = randn(rng, n);
    const auto bias = randn(rng, n);
    std::vector<double> y_ref(x.size()), y_omp(x.size());
    const double eps = 1e-5;

    const double serial = best_ms(
        [&] {
            for (long r = 0; r < rows; ++r)
                segicl::ref::layer_norm(x.data() + r * n, gain.data(), bias.data(),
                                        y_ref.data() + r * n, n, eps);
        },
        reps);
    const double omp = best_ms(
        [&] {
            segicl::kern::layer_norm_rows(x.data(), gain.data(), bias.data(),
                                          y_omp.data(), rows, n, eps);
        },
        reps);
    report("layer_norm", 8.0 * rows * n, serial, omp, max_abs_diff(y_ref, y_omp));
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::max(1, std::atoi(argv[1])) : 3;
    Rng rng(42);
    std::printf("threads: %d, reps: %d (best run reported)\n",
                segicl::thread_count(), reps);
    std::printf("%-14s %13s %13s %8s %14s  %s\n", "kernel", "serial", "openmp",
                "speedup", "omp rate", "max|diff|");
    bench_gemm(rng, reps);
    bench_conv(rng, reps);
    bench_softmax(rng, reps);
    bench_layer_norm(rng, reps);
    if (!g_ok) {
        std::fprintf(stderr, "kernel mismatch against the serial reference\n");
        return 1;
    }
    return 0;
}
